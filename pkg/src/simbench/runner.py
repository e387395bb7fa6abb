"""Stage pipeline: artifact persistence, resumption, and reports.

Every artifact file is JSON-lines or CSV written with sorted keys and
fixed float formatting, and the manifest carries no timestamps, so a run
with mock backends is reproducible byte for byte. Completed stages are
marked in ``manifest.json``; re-running skips them, which makes partial
runs resumable (deterministic inputs are recomputed rather than cached).
"""

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import arena, catalog, corpus, defects, orchestrator, recsys
from .backend import MockBackend, RemoteBackend, ScriptedBackend
from .config import RunConfig, STAGES
from .errors import SimbenchError
from .profile import (
    HistoryEntry,
    PreferenceStatement,
    UserProfile,
    init_profile,
    profile_record,
)
from .seeding import derive_rng

MANIFEST = "manifest.json"

_STAGE_DEPS = {
    "ingest": (),
    "init-profiles": ("ingest",),
    "optimize": ("init-profiles",),
    "synthesize-defects": ("init-profiles",),
    "emit-corpus": ("synthesize-defects",),
    "eval-diagnostic": ("synthesize-defects",),
    "interact": ("optimize",),
    "report": (),
}


def _dump(row) -> str:
    return json.dumps(row, sort_keys=True)


def append_jsonl(path: Path, rows):
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(_dump(row) + "\n")


def read_jsonl(path: Path):
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def build_backend(spec: dict, seed: int):
    kind = spec.get("kind")
    if kind == "mock":
        return MockBackend(seed=spec.get("seed", seed))
    if kind == "scripted":
        return ScriptedBackend(spec.get("responses", []))
    if kind == "remote":
        return RemoteBackend(
            base_url=spec["base_url"],
            model=spec.get("model", "default"),
            max_attempts=spec.get("max_attempts", 3),
            rate_per_s=spec.get("rate_per_s", 5.0),
            max_concurrency=spec.get("max_concurrency", 4),
            timeout=spec.get("timeout", 60.0),
        )
    raise SimbenchError(f"unknown backend kind: {kind!r}")


def _statements_from_record(rows):
    return tuple(
        PreferenceStatement(statement_id=r["id"], topics=frozenset(r["topics"]),
                            sentiment=r["sentiment"], text=r["text"],
                            provenance=r.get("provenance", "initial"))
        for r in rows)


def profiles_from_records(records):
    """Latest profile per user, with full version history, from store rows."""
    by_user = {}
    for rec in records:
        by_user.setdefault(rec["user"], []).append(rec)
    out = {}
    for user, recs in by_user.items():
        recs.sort(key=lambda r: r["version"])
        history = tuple(
            HistoryEntry(version=recs[k]["version"], cause=recs[k + 1]["cause"],
                         statements=_statements_from_record(recs[k]["statements"]))
            for k in range(len(recs) - 1))
        last = recs[-1]
        out[user] = UserProfile(
            user_id=user,
            statements=_statements_from_record(last["statements"]),
            version=last["version"], history=history)
    return out


def version_records(profile: UserProfile, min_version: int = 0):
    """One store row per profile version at or above ``min_version``."""
    rows = []
    snapshots = list(profile.history) + [
        HistoryEntry(profile.version, None, profile.statements)]
    for k, snap in enumerate(snapshots):
        if snap.version < min_version:
            continue
        cause = "initial" if snap.version == 0 else snapshots[k - 1].cause
        stand_in = UserProfile(profile.user_id, snap.statements, snap.version)
        rows.append(profile_record(stand_in, cause))
    return rows


class Run:
    """One configured run rooted at ``config.output_dir``."""

    def __init__(self, config: RunConfig):
        self.config = config.validate()
        self.out = Path(config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = self._load_manifest()
        self._dataset = None
        self._splits = None
        self._backends = {}

    # -- manifest ---------------------------------------------------------

    def _identity(self) -> dict:
        return self.config.identity_dict()

    def _load_manifest(self) -> dict:
        path = self.out / MANIFEST
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                manifest = json.load(fh)
            if manifest.get("config") != self._identity():
                raise SimbenchError(
                    f"{path} belongs to a different configuration; "
                    "use a fresh output directory")
            return manifest
        return {"config": self._identity(),
                "config_hash": self.config.config_hash(),
                "seed": self.config.seed, "stages": {}}

    def _save_manifest(self):
        with open(self.out / MANIFEST, "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(_dump(self.manifest) + "\n")

    def stage_done(self, stage: str) -> bool:
        return self.manifest["stages"].get(stage, {}).get("status") == "done"

    def _mark_done(self, stage: str, **info):
        self.manifest["stages"][stage] = {"status": "done", **info}
        self._save_manifest()

    # -- shared inputs ----------------------------------------------------

    def backend(self, role: str):
        if role not in self._backends:
            self._backends[role] = build_backend(
                self.config.backends[role], self.config.seed)
        return self._backends[role]

    def dataset(self):
        if self._dataset is None:
            cfg = self.config
            self._dataset = catalog.ingest(cfg.dataset_path,
                                           cfg.dataset_format,
                                           cfg.min_interactions)
            self._splits, self._split_summary = catalog.split_dataset(
                self._dataset, cfg.alpha, cfg.max_len, cfg.test_n,
                cfg.min_train)
        return self._dataset

    def splits(self):
        self.dataset()
        return self._splits

    def sampled_users(self):
        done = self.manifest["stages"].get("ingest")
        if done and "sampled_users" in done:
            return list(done["sampled_users"])
        return catalog.sample_users(self.splits(), self.config.user_sample,
                                    self.config.seed)

    def _pairs(self, split, attr):
        dataset = self.dataset()
        return [(dataset.items[it.item_id], it.rating)
                for it in getattr(split, attr)]

    def profiles(self):
        records = read_jsonl(self.out / "profiles.jsonl")
        return profiles_from_records(records)

    def _map_users(self, users, fn):
        """Apply ``fn(user)`` across users, honoring the jobs setting.

        Results are collected and handled in sorted user order so artifact
        bytes never depend on scheduling.
        """
        if self.config.jobs <= 1:
            return {user: fn(user) for user in users}
        with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
            results = dict(zip(users, pool.map(fn, users)))
        return results

    # -- stages -----------------------------------------------------------

    def run_stage(self, stage: str):
        if stage not in STAGES:
            raise SimbenchError(f"unknown stage: {stage!r}")
        for dep in _STAGE_DEPS[stage]:
            if not self.stage_done(dep):
                self.run_stage(dep)
        if self.stage_done(stage):
            return
        getattr(self, "_stage_" + stage.replace("-", "_"))()

    def _stage_ingest(self):
        dataset = self.dataset()
        sampled = catalog.sample_users(self.splits(), self.config.user_sample,
                                       self.config.seed)
        self._mark_done(
            "ingest", users=len(dataset.users), items=len(dataset.items),
            interactions=dataset.n_interactions,
            eligible=self._split_summary.eligible,
            excluded=self._split_summary.excluded,
            warnings=len(dataset.warnings), sampled_users=sampled)

    def _stage_init_profiles(self):
        splits = self.splits()
        backend = self.backend("simulator")

        def build(user):
            return init_profile(self._pairs(splits[user], "d_ini"), backend,
                                user_id=user)

        profiles = self._map_users(self.sampled_users(), build)
        rows = [profile_record(profiles[u], "initial")
                for u in sorted(profiles)]
        append_jsonl(self.out / "profiles.jsonl", rows)
        self._mark_done("init-profiles", profiles=len(rows))

    def _stage_optimize(self):
        cfg = self.config
        splits = self.splits()
        profiles = self.profiles()
        stack = orchestrator.OptimizationStack(
            simulator=self.backend("simulator"),
            diagnosis=self.backend("diagnosis"),
            treatment=self.backend("treatment"))

        def optimize_user(user):
            events = []
            optimized, trace = orchestrator.optimize(
                self._pairs(splits[user], "d_ini"),
                self._pairs(splits[user], "d_opt"),
                cfg.n1, stack, mode=cfg.mode, user_id=user,
                flush_tail=cfg.flush_tail, event_sink=events.append,
                initial_profile=profiles[user])
            return optimized, trace, events

        results = self._map_users(self.sampled_users(), optimize_user)
        profile_rows, trace_rows, event_rows = [], [], []
        batches = 0
        for user in sorted(results):
            optimized, trace, events = results[user]
            profile_rows.extend(version_records(optimized, min_version=1))
            trace_rows.append(orchestrator.trace_record(user, trace))
            event_rows.extend(events)
            batches += trace.optimizations
        append_jsonl(self.out / "profiles.jsonl", profile_rows)
        append_jsonl(self.out / "traces.jsonl", trace_rows)
        append_jsonl(self.out / "events.jsonl", event_rows)
        self._mark_done("optimize", users=len(results), batches=batches)

    def _source_pairs(self):
        profiles = self.profiles()
        initial = {}
        for user, profile in profiles.items():
            if profile.version == 0:
                initial[user] = profile
            else:
                entry = profile.history[0]
                initial[user] = UserProfile(user, entry.statements, 0)
        return defects.collect_source_pairs(initial, self.splits(),
                                            self.dataset(),
                                            self.backend("simulator"))

    def _defect_corpus(self):
        pairs = self._source_pairs()
        return pairs, defects.build_defect_corpus(
            pairs, mix=self.config.label_mix, rho=self.config.rho,
            seed=self.config.seed)

    def _stage_synthesize_defects(self):
        _, (train, test) = self._defect_corpus()
        rows = [defects.defect_record(s, "train") for s in train]
        rows += [defects.defect_record(s, "test") for s in test]
        append_jsonl(self.out / "defects.jsonl", rows)
        self._mark_done("synthesize-defects", train=len(train), test=len(test))

    def _stage_emit_corpus(self):
        pairs, (train, test) = self._defect_corpus()
        pre_rows, rejected, overlong_pre = [], 0, 0
        for pair in pairs:
            try:
                record = corpus.emit_pretrain(pair.profile, pair.item,
                                              pair.behavior, pair.rating)
            except corpus.CorpusReject:
                rejected += 1
                continue
            overlong_pre += len(record.text) > corpus.PRETRAIN_CHAR_BUDGET
            pre_rows.append(corpus.pretrain_row(record))
        append_jsonl(self.out / "pretrain.jsonl", pre_rows)
        overlong_ft = 0
        for name, samples in (("finetune_train.jsonl", train),
                              ("finetune_test.jsonl", test)):
            rows = []
            for sample in samples:
                record = corpus.emit_finetune(sample)
                overlong_ft += record.mask_span[1] > corpus.FINETUNE_CHAR_BUDGET
                rows.append(corpus.instruct_row(record))
            append_jsonl(self.out / name, rows)
        # max sequence lengths are enforced downstream at tokenization time;
        # emission only flags records over the character-budget heuristic
        self._mark_done("emit-corpus", pretrain=len(pre_rows),
                        rejected=rejected, finetune_train=len(train),
                        finetune_test=len(test),
                        overlong_pretrain=overlong_pre,
                        overlong_finetune=overlong_ft)

    def _stage_eval_diagnostic(self):
        _, (_, test) = self._defect_corpus()
        if self.config.eval_diagnostic_with == "oracle":
            predictor = corpus.oracle_predictor
        else:
            predictor = self.backend("diagnosis")
        report = corpus.eval_diagnostic(predictor, test)
        confusion = {}
        for (true, pred), n in sorted(report.confusion.items()):
            confusion.setdefault(true, {})[pred] = n
        with open(self.out / "diagnostic_report.json", "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write(_dump({"accuracy": round(report.accuracy, 6),
                            "confusion": confusion, "total": report.total,
                            "failures": report.failures}) + "\n")
        self._mark_done("eval-diagnostic",
                        accuracy=round(report.accuracy, 6),
                        failures=report.failures)

    def _recommender(self):
        cfg = self.config
        dataset = self.dataset()
        train = {u: [it.item_id
                     for it in self.splits()[u].d_ini + self.splits()[u].d_opt]
                 for u in self.splits()}
        if cfg.recommender == "fpmc":
            params = {k: v for k, v in cfg.rec_params.items()
                      if k in recsys.FPMCHyperparams.__dataclass_fields__}
            return recsys.fit(dataset, recsys.FPMCHyperparams(**params),
                              seed=cfg.seed, sequences=train)
        if cfg.recommender == "markov":
            return recsys.fit_markov(dataset, sequences=train)
        if cfg.recommender == "popularity":
            return recsys.fit_popularity(dataset, sequences=train)
        return recsys.ExternalRecommender(
            command=cfg.rec_params.get("command"),
            url=cfg.rec_params.get("url"))

    def _stage_interact(self):
        cfg = self.config
        splits = self.splits()
        dataset = self.dataset()
        profiles = self.profiles()
        model = self._recommender()
        backend = self.backend("simulator")
        online = bool(cfg.rec_params.get("online_updates", False))

        def interact_user(user):
            events = []
            sim = arena.ProfileSimulator(profiles[user], backend)
            version_before = profiles[user].version
            logs = arena.run_rounds(
                user, splits[user], dataset, model, sim, cfg.strategy,
                rounds=cfg.rounds, slate_size=cfg.slate_size, seed=cfg.seed,
                event_sink=events.append, online_updates=online)
            return logs, sim.profile, version_before, events

        results = self._map_users(self.sampled_users(), interact_user)
        round_rows, profile_rows, event_rows = [], [], []
        for user in sorted(results):
            logs, final_profile, version_before, events = results[user]
            round_rows.extend(arena.round_log_record(user, log)
                              for log in logs)
            profile_rows.extend(version_records(final_profile,
                                                min_version=version_before + 1))
            event_rows.extend(events)
        append_jsonl(self.out / "rounds.jsonl", round_rows)
        append_jsonl(self.out / "profiles.jsonl", profile_rows)
        append_jsonl(self.out / "events.jsonl", event_rows)
        self._mark_done("interact", users=len(results), rounds=len(round_rows))

    def _stage_report(self):
        logs = load_round_logs(self.out / "rounds.jsonl")
        cfg = self.config
        key = {"dataset": Path(cfg.dataset_path).name,
               "recommender": cfg.recommender,
               "strategy": cfg.strategy,
               "simulator": cfg.backends["simulator"]["kind"],
               "mode": cfg.mode}
        write_metrics_csv(self.out / "metrics.csv", key, logs)
        write_series_csv(self.out / "rounds_series.csv", key, logs)
        with open(self.out / "summary.txt", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(run_summary(self))
        self._mark_done("report", rounds=len(logs))


def load_round_logs(path: Path):
    logs = []
    for row in read_jsonl(path):
        logs.append(arena.RoundLog(
            round_index=row["round"], slate=tuple(row["slate"]),
            judgments=tuple((i, y, w) for i, y, w in row["judgments"]),
            selection=row["selection"], gt_item=row["gt"],
            version_before=row["version_before"],
            version_after=row["version_after"], strategy=row["strategy"]))
    return logs


_KEY_COLUMNS = ("dataset", "recommender", "strategy", "simulator", "mode")
_METRIC_COLUMNS = ("variant", "tp", "fp", "fn", "tn", "precision", "recall",
                   "accuracy", "f1")


def _fmt(value) -> str:
    return f"{value:.6f}" if isinstance(value, float) else str(value)


def write_metrics_csv(path: Path, key: dict, logs):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_KEY_COLUMNS + _METRIC_COLUMNS)
        if not logs:
            return
        for variant in ("per_candidate", "selection_only"):
            m = arena.compute_metrics(logs, variant)
            writer.writerow([key[c] for c in _KEY_COLUMNS]
                            + [variant, m.tp, m.fp, m.fn, m.tn,
                               _fmt(m.precision), _fmt(m.recall),
                               _fmt(m.accuracy), _fmt(m.f1)])


def write_series_csv(path: Path, key: dict, logs):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_KEY_COLUMNS + ("round", "precision", "recall",
                                        "accuracy", "f1"))
        if not logs:
            return
        for row in arena.round_series(logs):
            writer.writerow([key[c] for c in _KEY_COLUMNS]
                            + [row["round"], _fmt(row["precision"]),
                               _fmt(row["recall"]), _fmt(row["accuracy"]),
                               _fmt(row["f1"])])


def run_summary(run: Run) -> str:
    lines = [f"config hash: {run.manifest['config_hash']}"]
    stages = run.manifest["stages"]
    if "optimize" in stages:
        info = stages["optimize"]
        lines.append(f"optimization: {info.get('users', 0)} users, "
                     f"{info.get('batches', 0)} treated batches")
    logs = load_round_logs(run.out / "rounds.jsonl")
    if logs:
        m = arena.compute_metrics(logs)
        lines.append(
            f"arena ({len(logs)} rounds): precision {m.precision:.4f} "
            f"recall {m.recall:.4f} accuracy {m.accuracy:.4f} f1 {m.f1:.4f}")
    else:
        lines.append("arena: no rounds recorded")
    if (run.out / "diagnostic_report.json").exists():
        report = read_jsonl(run.out / "diagnostic_report.json")[0]
        lines.append(f"diagnostic accuracy: {report['accuracy']:.4f} "
                     f"({report['total']} samples, "
                     f"{report['failures']} failures)")
    return "\n".join(lines) + "\n"


def run(config: RunConfig, stages=None) -> dict:
    """Execute the requested stages (all of them by default).

    Returns a mapping from artifact name to path for everything present.
    """
    runner = Run(config)
    for stage in (stages or STAGES):
        runner.run_stage(stage)
    artifacts = {}
    for name in ("manifest.json", "profiles.jsonl", "events.jsonl",
                 "traces.jsonl", "rounds.jsonl", "defects.jsonl",
                 "pretrain.jsonl", "finetune_train.jsonl",
                 "finetune_test.jsonl", "diagnostic_report.json",
                 "metrics.csv", "rounds_series.csv", "summary.txt"):
        path = runner.out / name
        if path.exists():
            artifacts[name] = path
    return artifacts


def _stack_csvs(run_dirs, name: str, required: bool) -> str:
    header = None
    rows = []
    for run_dir in run_dirs:
        path = Path(run_dir) / name
        if not path.exists():
            if required:
                raise SimbenchError(f"no {name} under {run_dir}")
            continue
        with open(path, encoding="utf-8") as fh:
            reader = csv.reader(fh)
            this_header = tuple(next(reader))
            if header is None:
                header = this_header
            elif this_header != header:
                raise SimbenchError(
                    f"{path} has a different metrics schema; refusing to mix")
            rows.extend(reader)
    if header is None:
        return ""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(sorted(rows))
    return buf.getvalue()


def combine_runs(run_dirs, out_dir=None) -> dict:
    """Join finished runs into comparison tables plus a short summary.

    Produces a pooled-metrics table, a per-round cumulative series table,
    and (when present) a diagnostic-accuracy table. Runs must share the
    metrics schema; config keys (strategy, recommender, ...) are columns,
    so two runs differing only in strategy land in one table distinguished
    by the strategy column. With ``out_dir`` the tables are also written
    as ``comparison_*.csv`` and ``comparison_summary.txt``.
    """
    report = {
        "metrics": _stack_csvs(run_dirs, "metrics.csv", required=True),
        "series": _stack_csvs(run_dirs, "rounds_series.csv", required=False),
    }
    diag_rows = []
    for run_dir in run_dirs:
        path = Path(run_dir) / "diagnostic_report.json"
        if path.exists():
            payload = read_jsonl(path)[0]
            diag_rows.append([Path(run_dir).name,
                              _fmt(float(payload["accuracy"])),
                              payload["total"], payload["failures"]])
    if diag_rows:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["run", "accuracy", "total", "failures"])
        writer.writerows(sorted(diag_rows))
        report["diagnostics"] = buf.getvalue()
    else:
        report["diagnostics"] = ""

    lines = [f"compared runs: {len(run_dirs)}"]
    lines.append(f"metric rows: {max(0, len(report['metrics'].splitlines()) - 1)}")
    if report["diagnostics"]:
        lines.append(f"diagnostic reports: {len(diag_rows)}")
    report["summary"] = "\n".join(lines) + "\n"

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for key, name in (("metrics", "comparison_metrics.csv"),
                          ("series", "comparison_series.csv"),
                          ("diagnostics", "comparison_diagnostics.csv")):
            if report[key]:
                with open(out / name, "w", encoding="utf-8",
                          newline="") as fh:
                    fh.write(report[key])
        with open(out / "comparison_summary.txt", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(report["summary"])
    return report
