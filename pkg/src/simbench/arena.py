"""Multi-round loop between the user simulator and a sequential recommender.

Each round follows four steps: (1) the recommender ranks a slate built
from the round's held-out ground-truth item plus seeded negatives drawn
outside the user's whole split history; (2) the simulator judges every
candidate independently and selects at most the highest-ranked accepted
one; (3) the profile is updated per the chosen strategy; (4) the
recommender's per-user state advances with the new observation.

The per-candidate judgments feed the consistency metrics while the single
selection drives state: slate-level precision around 0.10 next to recall
around 0.63 is only arithmetically possible when every candidate receives
its own yes/no, yet at most one item per round may be "consumed", so the
two signals are kept side by side (a selection-only metric variant is
also reported for comparison).
"""

from dataclasses import dataclass

from . import recsys
from .errors import SimbenchError
from .profile import UserProfile, update_profile
from .seeding import derive_rng
from .simulator import Behavior, decide


@dataclass(frozen=True)
class RoundLog:
    round_index: int  # 1-based
    slate: tuple  # ranked item ids, ground truth included exactly once
    judgments: tuple  # (item_id, interact, rationale) aligned with slate
    selection: object  # item id or None
    gt_item: object  # item id
    version_before: int
    version_after: int
    strategy: str


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    accuracy: float
    f1: float


class ProfileSimulator:
    """Completion-backed judge carrying the evolving profile."""

    def __init__(self, profile: UserProfile, backend):
        self.profile = profile
        self.backend = backend

    def judge(self, item) -> Behavior:
        return decide(self.profile, item, self.backend)

    def apply_update(self, strategy, selected_item, gt_item, round_index):
        self.profile = update_profile(
            self.profile, strategy, selected=selected_item, gt=gt_item,
            backend=self.backend, round_index=round_index)


def sample_negatives(dataset, excluded_ids, n: int, seed: int, user_id,
                     round_index: int):
    """n distinct negatives outside ``excluded_ids``, seeded per (user, round)."""
    pool = sorted(set(dataset.items) - set(excluded_ids))
    if len(pool) < n:
        raise SimbenchError(
            f"only {len(pool)} items available for {n} negatives")
    rng = derive_rng(seed, "arena-negatives", user_id, round_index)
    picked = rng.choice(len(pool), size=n, replace=False)
    return [pool[i] for i in sorted(picked)]


def run_rounds(user_id, split, dataset, recommender, simulator, strategy,
               rounds: int = 10, slate_size: int = 20, seed: int = 0,
               event_sink=None, online_updates: bool = False):
    """Drive one user through up to ``rounds`` recommendation rounds.

    ``online_updates`` additionally applies one SGD step per observed
    interaction when the recommender supports it (sensitivity studies
    only; recommender weights are frozen by default).
    """
    if len(split.test) < rounds:
        raise SimbenchError(
            f"user {user_id} has {len(split.test)} test items, "
            f"needs {rounds}")
    history = split.d_ini + split.d_opt + (split.validation,)
    state = recsys.RecommenderState(tuple(it.item_id for it in history))
    full_history_ids = {it.item_id for it in history} | {
        it.item_id for it in split.test}

    logs = []
    for t in range(1, rounds + 1):
        gt_id = split.test[t - 1].item_id
        negatives = sample_negatives(dataset, full_history_ids,
                                     slate_size - 1, seed, user_id, t)
        slate = recsys.rank_slate(recommender, user_id, state, gt_id,
                                  negatives)

        judgments = []
        exited = False
        for item_id in slate:
            behavior = simulator.judge(dataset.items[item_id])
            if behavior.exit:
                exited = True
                break
            judgments.append((item_id, behavior.interact, behavior.rationale))
            if event_sink is not None:
                event_sink({"kind": "arena-decision", "user": user_id,
                            "round": t, "item": item_id,
                            "interact": behavior.interact,
                            "rationale": behavior.rationale})
        if exited:
            break

        selection = next((iid for iid, yes, _ in judgments if yes), None)
        version_before = simulator.profile.version
        selected_item = dataset.items[selection] if selection else None
        gt_item = dataset.items[gt_id]
        simulator.apply_update(strategy, selected_item, gt_item, t)
        version_after = simulator.profile.version

        observed = gt_id if strategy == "with_gt" else selection
        if observed is not None:
            if online_updates and hasattr(recommender, "online_step") \
                    and state.last is not None:
                recommender.online_step(
                    user_id, state.last, observed,
                    derive_rng(seed, "arena-online", user_id, t))
            state = recsys.advance(state, observed)

        logs.append(RoundLog(round_index=t, slate=tuple(slate),
                             judgments=tuple(judgments), selection=selection,
                             gt_item=gt_id, version_before=version_before,
                             version_after=version_after, strategy=strategy))
    return logs


def confusion_counts(logs, mode: str = "per_candidate"):
    """Pooled (micro) confusion counts over all rounds and candidates.

    A candidate is positive iff it is the round's ground truth; it counts
    as predicted-positive per the mode: its own yes/no judgment
    (``per_candidate``) or being the round's single selection
    (``selection_only``).
    """
    tp = fp = fn = tn = 0
    for log in logs:
        for item_id, judged_yes, _ in log.judgments:
            predicted = judged_yes if mode == "per_candidate" \
                else item_id == log.selection
            actual = item_id == log.gt_item
            if actual and predicted:
                tp += 1
            elif actual:
                fn += 1
            elif predicted:
                fp += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    f1 = 2 * precision * recall / (precision + recall) \
        if precision + recall else 0.0
    return Metrics(tp, fp, fn, tn, precision, recall, accuracy, f1)


def compute_metrics(logs, mode: str = "per_candidate") -> Metrics:
    if not logs:
        raise SimbenchError("no round logs to score")
    return metrics_from_counts(*confusion_counts(logs, mode))


def round_series(logs, mode: str = "per_candidate"):
    """Cumulative metrics after each round index (plot-ready series)."""
    max_round = max(log.round_index for log in logs)
    series = []
    for t in range(1, max_round + 1):
        upto = [log for log in logs if log.round_index <= t]
        m = compute_metrics(upto, mode)
        series.append({"round": t, "precision": m.precision,
                       "recall": m.recall, "accuracy": m.accuracy,
                       "f1": m.f1})
    return series


def round_log_record(user_id, log: RoundLog) -> dict:
    return {
        "user": user_id,
        "round": log.round_index,
        "slate": list(log.slate),
        "judgments": [[iid, yes, why] for iid, yes, why in log.judgments],
        "selection": log.selection,
        "gt": log.gt_item,
        "version_before": log.version_before,
        "version_after": log.version_after,
        "strategy": log.strategy,
    }
