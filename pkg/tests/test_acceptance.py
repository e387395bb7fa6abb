"""Acceptance criteria, one test per criterion.

Every test enforces its stated tolerance and runtime budget and prints one
``ACCEPTANCE <name>: PASS`` line (visible under ``pytest -v -s`` or in the
captured output). The whole module runs offline against mock backends and
needs nothing outside this repository.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from simbench import arena, corpus, defects, orchestrator as orch, recsys, runner
from simbench.backend import MockBackend, ScriptedDecisionBackend
from simbench.config import RunConfig
from simbench.diagnosis import oracle_diagnose
from simbench.profile import init_profile
from simbench.simulator import Behavior, DiscrepancyCase, decide
from simbench.structured import DefectLabel
from simbench.treatment import gen_suggestions, infer_reason, refine

from conftest import TOY_DIR, make_item, make_profile
from test_arena import _hand_case_logs, _random_logs, _set_based_counts
from test_orchestrator import (
    base_d_ini,
    reference_trace,
    unique_genre_d_opt,
)

MOCK = MockBackend(0)


class _budget:
    def __init__(self, name, seconds):
        self.name = name
        self.seconds = seconds

    def __enter__(self):
        self.started = time.monotonic()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.monotonic() - self.started
        if exc_type is None:
            assert elapsed < self.seconds, (
                f"{self.name} took {elapsed:.1f}s, budget {self.seconds}s")
            print(f"ACCEPTANCE {self.name}: PASS ({elapsed:.2f}s)")
        else:
            print(f"ACCEPTANCE {self.name}: FAIL")
        return False


def test_algorithm_oracle_equivalence():
    """Orchestrator trace equals a straight-line reference interpreter on
    20 randomized scripted fixtures."""
    with _budget("algorithm-oracle-equivalence", 5.0):
        rng = np.random.default_rng(101)
        seed_profile = init_profile(base_d_ini(), MOCK, user_id="fixture")
        for fixture in range(20):
            n = int(rng.integers(5, 41))
            n1 = int(rng.choice([1, 2, 4, 8]))
            declines = [bool(rng.integers(2)) for _ in range(n)]
            mode = "iterative" if fixture % 4 else "once"
            stack = orch.OptimizationStack(
                simulator=ScriptedDecisionBackend([not d for d in declines]),
                diagnosis=MOCK, treatment=MOCK)
            profile, trace = orch.optimize(
                base_d_ini(), unique_genre_d_opt(n), n1, stack, mode=mode,
                initial_profile=seed_profile)
            boundaries, count, version = reference_trace(declines, n1, mode)
            assert trace.batch_boundaries == boundaries
            assert trace.optimizations == count
            assert profile.version == version
            assert len(trace.decisions) == n


def _all_label_pairs(n):
    return [defects.SourcePair(
        f"u{k}",
        make_profile([("positive", {"Mystery"}, "Likes mysteries."),
                      ("positive", {"Thriller"}, "Likes thrillers."),
                      ("positive", {"Drama"}, "Likes dramas.")],
                     user_id=f"u{k}"),
        make_item(f"i{k}", f"Title {k}", ("Mystery", "Thriller")),
        5,
        Behavior(True, "Matches stated interest in Mystery, Thriller.",
                 "simulated"))
        for k in range(n)]


def test_defect_round_trip():
    """Oracle diagnosis recovers the planted label exactly on >= 300
    uniform-mix synthetic samples."""
    with _budget("defect-round-trip", 5.0):
        train, test = defects.build_defect_corpus(_all_label_pairs(300),
                                                  seed=13, size=300)
        samples = train + test
        assert len(samples) == 300
        per_label = {label: sum(s.label is label for s in samples)
                     for label in DefectLabel}
        assert all(n == 100 for n in per_label.values())
        report = corpus.eval_diagnostic(corpus.oracle_predictor, samples)
        assert report.accuracy == 1.0
        assert report.failures == 0


def test_closed_loop_resolution():
    """diagnose(oracle) -> treat(mock) -> refine flips the rule-based
    simulator to interact on 100% of synthetic decline-discrepancies."""
    with _budget("closed-loop-resolution", 10.0):
        train, test = defects.build_defect_corpus(_all_label_pairs(300),
                                                  seed=13, size=300)
        resolved = declines = 0
        for sample in train + test:
            simulated = decide(sample.defective_profile, sample.target_item,
                               MOCK)
            if simulated.interact:
                continue
            declines += 1
            case = DiscrepancyCase(sample.target_item, simulated,
                                   Behavior(True, "observed", "real"), 0)
            label = oracle_diagnose(sample.defective_profile, case).label
            reason = infer_reason(sample.defective_profile, case, label, MOCK)
            suggestions = gen_suggestions(sample.defective_profile, case,
                                          label, reason, MOCK)
            healed = refine(sample.defective_profile, suggestions, MOCK,
                            guard_titles=[sample.target_item.title])
            resolved += decide(healed, sample.target_item, MOCK).interact
        assert declines >= 200  # the corpus is dominated by hard declines
        assert resolved == declines  # 100%, no tolerance


def test_metrics_oracle():
    """compute_metrics equals an independent set-based confusion counter on
    100 random fixtures, plus the hand-computed case."""
    with _budget("metrics-oracle", 5.0):
        rng = np.random.default_rng(77)
        for _ in range(100):
            logs = _random_logs(rng)
            m = arena.compute_metrics(logs)
            assert (m.tp, m.fp, m.fn, m.tn) == \
                _set_based_counts(logs, "per_candidate")
        m = arena.compute_metrics(_hand_case_logs())
        assert (m.tp, m.fp, m.fn, m.tn) == (3, 27, 7, 163)
        assert m.precision == pytest.approx(0.100, abs=1e-12)
        assert m.recall == pytest.approx(0.300, abs=1e-12)
        assert m.accuracy == pytest.approx(0.830, abs=1e-12)
        assert m.f1 == pytest.approx(0.150, abs=1e-12)


def test_fpmc_numerics():
    """Analytic BPR gradients within 1e-4 of central differences at 10
    random points; planted-chain successor ranks top-5 of 20 for >= 80%
    of probes."""
    with _budget("fpmc-numerics", 60.0):
        rng = np.random.default_rng(5)
        for _ in range(10):
            vecs = {name: rng.normal(0.0, 1.0, 8) for name in
                    ("v_ui_u", "v_iu_p", "v_iu_n", "v_li_j", "v_il_p",
                     "v_il_n")}
            grads = recsys.bpr_grads(**vecs, reg=0.03)
            h = 1e-6
            for name in vecs:
                for k in range(8):
                    plus = {n: v.copy() for n, v in vecs.items()}
                    minus = {n: v.copy() for n, v in vecs.items()}
                    plus[name][k] += h
                    minus[name][k] -= h
                    numeric = (recsys.bpr_loss(**plus, reg=0.03)
                               - recsys.bpr_loss(**minus, reg=0.03)) / (2 * h)
                    rel = abs(numeric - grads[name][k]) / max(
                        1e-8, abs(numeric), abs(grads[name][k]))
                    assert rel < 1e-4

        # planted chain: 200 items, 500 users, deterministic successor
        chain_rng = np.random.default_rng(11)
        sequences = {
            f"u{u:03d}": [f"i{(start + k) % 200:03d}" for k in range(20)]
            for u, start in enumerate(chain_rng.integers(200, size=500))}
        hp = recsys.FPMCHyperparams(dim=16, learning_rate=0.05, reg=0.002,
                                    batch_size=128, epochs=20)
        model = recsys.fit(sequences, hp, seed=3)
        assert np.mean(model.epoch_losses[-5:]) < \
            np.mean(model.epoch_losses[:5])

        probe_rng = np.random.default_rng(99)
        items = [f"i{k:03d}" for k in range(200)]
        hits = probes = 0
        for u in range(0, 500, 2):
            user = f"u{u:03d}"
            seq = sequences[user]
            successor = f"i{(int(seq[-1][1:]) + 1) % 200:03d}"
            pool = sorted(set(items) - set(seq) - {successor})
            negatives = list(probe_rng.choice(pool, 19, replace=False))
            state = recsys.RecommenderState(tuple(seq))
            slate = recsys.rank_slate(model, user, state, successor,
                                      negatives)
            probes += 1
            hits += slate.index(successor) < 5
        assert hits / probes >= 0.80


def test_arena_limits():
    """Oracle simulator with the ground-truth update strategy scores 1.0 on
    all four metrics; a never-interact simulator scores recall 0 and
    accuracy 0.95 on 20-item slates."""
    with _budget("arena-limits", 10.0):
        from test_arena import OracleSimulator, SilentSimulator, \
            _world, _zero_recommender
        dataset, split = _world()
        model = _zero_recommender(dataset)
        sim = OracleSimulator({it.item_id for it in split.test},
                              make_profile([("positive", {"Mystery"}, "x.")]))
        logs = arena.run_rounds("u1", split, dataset, model, sim, "with_gt",
                                rounds=10, slate_size=20, seed=3)
        m = arena.compute_metrics(logs)
        assert (m.precision, m.recall, m.accuracy, m.f1) == \
            (1.0, 1.0, 1.0, 1.0)

        silent = SilentSimulator(make_profile([]))
        logs = arena.run_rounds("u1", split, dataset, model, silent, "none",
                                rounds=10, slate_size=20, seed=3)
        m = arena.compute_metrics(logs)
        assert m.recall == 0.0
        assert m.accuracy == pytest.approx(0.95, abs=1e-12)


def test_corpus_golden_files():
    """Record emission reproduces the frozen fixtures byte-exactly and the
    mask span identity holds on every emitted record."""
    with _budget("corpus-golden-files", 5.0):
        from test_corpus import (
            _accepting_behavior,
            _books_item,
            _books_profile,
            _sample,
        )
        import json
        golden_dir = Path(__file__).parent / "golden"
        pretrain = corpus.emit_pretrain(_books_profile(), _books_item(),
                                        _accepting_behavior(), 5)
        assert pretrain.text + "\n" == \
            (golden_dir / "pretrain_sample.txt").read_text()

        record = corpus.emit_finetune(_sample())
        row = corpus.instruct_row(record)
        row["mask_span"] = list(record.mask_span)
        assert row == json.loads(
            (golden_dir / "finetune_sample.json").read_text())

        train, test = defects.build_defect_corpus(_all_label_pairs(60),
                                                  seed=21)
        for sample in train + test:
            rec = corpus.emit_finetune(sample)
            rendering = corpus.render_instruct(rec.system, rec.instruction,
                                               rec.input, rec.output)
            start, end = rec.mask_span
            assert rendering[start:end] == rec.output
            assert end - start == len(rec.output)


def test_pipeline_determinism(tmp_path):
    """The full toy pipeline produces byte-identical artifacts across two
    runs with mock backends (no secondary component, no network)."""
    with _budget("pipeline-determinism", 60.0):
        outputs = []
        for name in ("first", "second"):
            config = RunConfig.from_dict({
                "dataset_path": str(TOY_DIR),
                "min_interactions": 3,
                "seed": 7,
                "n1": 2,
                "rec_params": {"dim": 16, "learning_rate": 0.05, "reg": 0.01,
                               "batch_size": 64, "epochs": 8},
                "user_sample": 8,
                "output_dir": str(tmp_path / name),
            })
            outputs.append(runner.run(config))
        first, second = outputs
        assert set(first) == set(second)
        for name in first:
            a = Path(first[name]).read_bytes()
            b = Path(second[name]).read_bytes()
            assert a == b, f"artifact {name} differs between runs"
