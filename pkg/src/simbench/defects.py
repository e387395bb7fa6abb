"""Synthetic defect-profile generation for the labeled diagnosis corpus.

Starting from non-defective profile/item pairs (the simulator agreed with
the observed interaction and the rating was high), three perturbations
plant a known defect:

* inaccurate — one relevant positive statement is replaced by a
  templated opposite-sentiment statement on the same topics;
* incomplete — a proportion of the relevant statements is removed;
* both — every relevant statement but one is removed, then the survivor
  is flipped.

Each sample records the exact edit list, so the defective profile is
reproducible from the original, and the constructions are arranged so the
rule-based diagnostic oracle reads the planted label back exactly.
"""

import math
from dataclasses import dataclass

from . import simulator
from .errors import SimbenchError
from .profile import (
    HistoryEntry,
    PreferenceStatement,
    UserProfile,
    relevant_statements,
)
from .seeding import derive_rng
from .structured import DefectLabel, negated_text

LABELS = (DefectLabel.INACCURATE, DefectLabel.INCOMPLETE,
          DefectLabel.INACCURATE_AND_INCOMPLETE)


class DefectSkip(SimbenchError):
    """The pair cannot host the requested defect; reported, not fatal."""


@dataclass(frozen=True)
class DefectSample:
    original_profile: UserProfile
    defective_profile: UserProfile
    target_item: object
    label: DefectLabel
    edits: tuple  # ("remove", sid) | ("flip", sid, new_text)


@dataclass(frozen=True)
class SourcePair:
    user_id: str
    profile: UserProfile
    item: object
    rating: int
    behavior: object = None  # the simulator's accepting Behavior


def apply_edits(profile: UserProfile, edits):
    """Replay an edit list against the original statements."""
    statements = list(profile.statements)
    for edit in edits:
        if edit[0] == "remove":
            statements = [s for s in statements if s.statement_id != edit[1]]
        elif edit[0] == "flip":
            _, sid, new_text = edit
            statements = [
                PreferenceStatement(s.statement_id, s.topics, "negative",
                                    new_text, s.provenance)
                if s.statement_id == sid else s
                for s in statements
            ]
        else:
            raise SimbenchError(f"unknown edit kind: {edit[0]!r}")
    return tuple(statements)


def _perturbed(profile: UserProfile, edits, label: DefectLabel) -> UserProfile:
    entry = HistoryEntry(profile.version, f"synthetic-defect({label.value})",
                         profile.statements)
    return UserProfile(user_id=profile.user_id,
                       statements=apply_edits(profile, edits),
                       version=profile.version + 1,
                       history=profile.history + (entry,))


def _covered(attribute, statements) -> bool:
    a = attribute.casefold()
    return any(t.casefold() == a for s in statements for t in s.topics)


def make_inaccurate(profile: UserProfile, item, rng) -> DefectSample:
    """Flip one relevant positive statement to the opposite sentiment."""
    candidates = [s for s in relevant_statements(profile, item)
                  if s.sentiment == "positive"]
    if not candidates:
        raise DefectSkip("no relevant positive statement to flip")
    chosen = candidates[int(rng.integers(len(candidates)))]
    edits = (("flip", chosen.statement_id, negated_text(chosen.topics)),)
    return DefectSample(profile, _perturbed(profile, edits,
                                            DefectLabel.INACCURATE),
                        item, DefectLabel.INACCURATE, edits)


def make_incomplete(profile: UserProfile, item, rho: float, rng,
                    keep_one: bool = False) -> DefectSample:
    """Remove ``max(1, ceil(rho * n_relevant))`` relevant statements.

    ``keep_one`` caps removal so one relevant statement survives (used by
    the combined defect, which must leave a statement to flip).
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    relevant = relevant_statements(profile, item)
    if not relevant:
        raise DefectSkip("no relevant statement to remove")
    k = max(1, math.ceil(rho * len(relevant)))
    if keep_one:
        k = min(k, len(relevant) - 1)
        if k == 0:
            raise DefectSkip("only one relevant statement; nothing removable")
    picked = rng.choice(len(relevant), size=k, replace=False)
    removed_ids = {relevant[i].statement_id for i in picked}
    edits = tuple(("remove", s.statement_id) for s in profile.statements
                  if s.statement_id in removed_ids)
    return DefectSample(profile, _perturbed(profile, edits,
                                            DefectLabel.INCOMPLETE),
                        item, DefectLabel.INCOMPLETE, edits)


def make_both(profile: UserProfile, item, rho: float, rng) -> DefectSample:
    """Incomplete edit followed by an inaccurate edit on the survivor.

    The removal stage always drops every relevant statement except one
    (regardless of ``rho``), so the flipped survivor is the only relevant
    statement left and the planted label reads back exactly.
    """
    relevant = relevant_statements(profile, item)
    if len(relevant) < 2:
        raise DefectSkip("need at least two relevant statements")
    stage1 = make_incomplete(profile, item, rho=1.0, rng=rng, keep_one=True)
    stage2 = make_inaccurate(stage1.defective_profile, item, rng)
    edits = stage1.edits + stage2.edits
    return DefectSample(profile, _perturbed(profile, edits,
                                            DefectLabel.INACCURATE_AND_INCOMPLETE),
                        item, DefectLabel.INACCURATE_AND_INCOMPLETE, edits)


def eligible_labels(profile: UserProfile, item):
    """Labels this pair can host with an exact oracle round-trip."""
    relevant = relevant_statements(profile, item)
    positives = [s for s in relevant if s.sentiment == "positive"]
    all_covered = all(_covered(a, profile.statements)
                      for a in item.attributes)
    out = []
    if positives and all_covered:
        out.append(DefectLabel.INACCURATE)
    if relevant and len(positives) == len(relevant):
        out.append(DefectLabel.INCOMPLETE)
    if (len(relevant) >= 2 and len(positives) == len(relevant)
            and (not all_covered
                 or all(not set(map(str.casefold, item.attributes))
                        <= set(map(str.casefold, s.topics))
                        for s in relevant))):
        out.append(DefectLabel.INACCURATE_AND_INCOMPLETE)
    return tuple(out)


_MAKERS = {
    DefectLabel.INACCURATE:
        lambda profile, item, rho, rng: make_inaccurate(profile, item, rng),
    DefectLabel.INCOMPLETE: make_incomplete,
    DefectLabel.INACCURATE_AND_INCOMPLETE: make_both,
}


def collect_source_pairs(profiles, splits, dataset, backend):
    """Non-defective (profile, item) pairs from the initialization portions.

    A pair qualifies when the simulator's decision matches the observed
    interaction, the rating is high (>= 3) and the item carries attributes.
    """
    pairs = []
    for user_id in sorted(profiles):
        profile = profiles[user_id]
        for interaction in splits[user_id].d_ini:
            item = dataset.items[interaction.item_id]
            if interaction.rating < 3 or not item.attributes:
                continue
            behavior = simulator.decide(profile, item, backend)
            if behavior.interact:
                pairs.append(SourcePair(user_id, profile, item,
                                        interaction.rating, behavior))
    return pairs


def build_defect_corpus(pairs, mix=(1 / 3, 1 / 3, 1 / 3), rho: float = 0.5,
                        seed: int = 0, test_fraction: float = 0.2,
                        size: int = None):
    """Synthesize a labeled corpus and split it 8:2 stratified by label.

    ``mix`` gives the label proportions (inaccurate, incomplete, both).
    ``size`` fixes the corpus size; by default the largest size the
    per-label eligibility counts can support is used. Raises when the
    eligible pairs cannot satisfy the requested mix.
    """
    if len(mix) != 3 or any(m < 0 for m in mix) or not math.isclose(sum(mix), 1.0):
        raise ValueError(f"mix must be three non-negative shares summing to 1: {mix}")
    pool = list(pairs)
    rng = derive_rng(seed, "corpus-order")
    rng.shuffle(pool)

    eligibility = [eligible_labels(pair.profile, pair.item) for pair in pool]
    supply = {label: 0 for label in LABELS}
    for labels in eligibility:
        for label in labels:
            supply[label] += 1
    if size is None:
        size = len(pool)
        for label, share in zip(LABELS, mix):
            if share > 0:
                size = min(size, math.floor(supply[label] / share))
    targets = _apportion(size, mix)
    need = dict(zip(LABELS, targets))
    samples = {label: [] for label in LABELS}
    skipped = []
    for pair, labels in zip(pool, eligibility):
        # scarce labels first: assign by remaining need per remaining supply
        options = [label for label in labels if need[label] > 0]
        for label in labels:
            supply[label] -= 1
        if not options:
            skipped.append(pair)
            continue
        label = max(options,
                    key=lambda l: (need[l] / (supply[l] + 1), -LABELS.index(l)))
        sample_rng = derive_rng(seed, "defect", pair.user_id,
                                pair.item.item_id)
        try:
            sample = _MAKERS[label](pair.profile, pair.item, rho, sample_rng)
        except DefectSkip:
            skipped.append(pair)
            continue
        samples[label].append(sample)
        need[label] -= 1

    unmet = {label.value: n for label, n in need.items() if n > 0}
    if unmet:
        raise SimbenchError(
            f"insufficient eligible pairs for requested mix; short by {unmet}")

    train, test = [], []
    for label in LABELS:
        group = samples[label]
        order = derive_rng(seed, "corpus-split", label.value)
        idx = list(order.permutation(len(group)))
        n_test = math.floor(len(group) * test_fraction)
        test.extend(group[i] for i in idx[:n_test])
        train.extend(group[i] for i in idx[n_test:])
    return train, test


def _apportion(total: int, mix):
    """Largest-remainder apportionment of ``total`` into three shares."""
    raw = [total * m for m in mix]
    counts = [math.floor(r) for r in raw]
    remainders = sorted(range(3), key=lambda i: (raw[i] - counts[i], -i),
                        reverse=True)
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return counts


def defect_record(sample: DefectSample, split: str) -> dict:
    """JSON-ready corpus row (external interface)."""
    def statements(profile):
        return [
            {"id": s.statement_id, "sentiment": s.sentiment,
             "topics": sorted(s.topics, key=str.casefold), "text": s.text}
            for s in profile.statements
        ]

    return {
        "original": statements(sample.original_profile),
        "defective": statements(sample.defective_profile),
        "item": {
            "id": sample.target_item.item_id,
            "title": sample.target_item.title,
            "genres": sorted(sample.target_item.attributes, key=str.casefold),
        },
        "label": sample.label.value,
        "edits": [list(e) for e in sample.edits],
        "split": split,
    }
