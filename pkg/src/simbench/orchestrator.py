"""Iterative profile optimization over the optimization portion.

Traverses a user's optimization items in order, judging each against the
*current* profile, collecting decline-discrepancies into batches of size
``n1``; every full batch runs diagnose -> reason -> suggestions -> refine
and the traversal continues against the refined profile. A trailing
partial batch triggers nothing unless ``flush_tail`` is set, and when no
batch ever completes the optimized profile is simply the initial one.
"""

from dataclasses import dataclass

from .diagnosis import diagnose
from .errors import BackendError, InvariantViolation, OptimizationAborted, ParseError
from .profile import init_profile
from .simulator import decide, find_discrepancy, observed_behavior
from .treatment import gen_suggestions, infer_reason, refine


@dataclass(frozen=True)
class OptimizationStack:
    """Backends per role; profile initialization rides on the simulator's."""

    simulator: object
    diagnosis: object
    treatment: object


@dataclass(frozen=True)
class DecisionRecord:
    position: int  # 1-based index into d_opt
    item_id: object
    interact: bool
    profile_version: int  # version the decision was judged against


@dataclass(frozen=True)
class BatchRecord:
    boundary: int  # position at which the batch filled
    positions: tuple
    labels: tuple  # defect-label values, one per case
    reasons: tuple
    suggestions: tuple  # deduplicated, in application order
    version_after: int


@dataclass(frozen=True)
class OptimizationTrace:
    decisions: tuple
    batches: tuple
    final_version: int

    @property
    def batch_boundaries(self):
        return tuple(b.boundary for b in self.batches)

    @property
    def optimizations(self) -> int:
        return len(self.batches)


def _treat_batch(profile, cases, stack, iteration):
    diagnoses = [diagnose(profile, case, stack.diagnosis) for case in cases]
    reasons = [infer_reason(profile, case, diag.label, stack.treatment)
               for case, diag in zip(cases, diagnoses)]
    merged, seen = [], set()
    for case, diag, reason in zip(cases, diagnoses, reasons):
        for sug in gen_suggestions(profile, case, diag.label, reason,
                                   stack.treatment):
            if sug not in seen:
                seen.add(sug)
                merged.append(sug)
    refined = refine(profile, merged, stack.treatment, iteration=iteration,
                     guard_titles=[case.item.title for case in cases])
    return refined, diagnoses, reasons, tuple(merged)


def optimize(d_ini, d_opt, n1: int, stack: OptimizationStack,
             mode: str = "iterative", user_id: str = "user",
             flush_tail: bool = False, event_sink=None,
             initial_profile=None):
    """Run the full optimization procedure; returns (profile, trace).

    ``d_ini``/``d_opt`` are sequences of (item, rating) pairs. ``mode``:
    ``iterative`` executes the workflow on every full batch; ``once`` stops
    optimizing after the first treated batch while still traversing the
    remaining items for the trace. Passing ``initial_profile`` skips the
    initialization call (used when a prior stage already built it).
    """
    if n1 < 1:
        raise ValueError(f"n1 must be at least 1, got {n1}")
    if mode not in ("iterative", "once"):
        raise ValueError(f"unknown mode: {mode!r}")

    profile = initial_profile if initial_profile is not None \
        else init_profile(d_ini, stack.simulator, user_id=user_id)
    decisions, batches, cases = [], [], []

    def run_batch(batch_cases):
        nonlocal profile
        iteration = len(batches) + 1
        try:
            try:
                result = _treat_batch(profile, batch_cases, stack, iteration)
            except (BackendError, ParseError, InvariantViolation):
                result = _treat_batch(profile, batch_cases, stack, iteration)
        except (BackendError, ParseError, InvariantViolation) as exc:
            trace = OptimizationTrace(tuple(decisions), tuple(batches),
                                      profile.version)
            raise OptimizationAborted(
                f"batch {iteration} failed twice: {exc}", trace)
        profile, diagnoses, reasons, suggestions = result
        batches.append(BatchRecord(
            boundary=batch_cases[-1].position,
            positions=tuple(case.position for case in batch_cases),
            labels=tuple(d.label.value for d in diagnoses),
            reasons=tuple(r.explanation for r in reasons),
            suggestions=suggestions,
            version_after=profile.version))
        if event_sink is not None:
            event_sink({"kind": "optimization", "user": user_id,
                        "iteration": iteration,
                        "positions": [c.position for c in batch_cases],
                        "labels": [d.label.value for d in diagnoses]})

    for position, (item, rating) in enumerate(d_opt, start=1):
        simulated = decide(profile, item, stack.simulator)
        decisions.append(DecisionRecord(position, item.item_id,
                                        simulated.interact, profile.version))
        if event_sink is not None:
            event_sink({"kind": "opt-decision", "user": user_id,
                        "position": position, "item": item.item_id,
                        "interact": simulated.interact,
                        "version": profile.version,
                        "rationale": simulated.rationale})
        collecting = mode == "iterative" or not batches
        if not collecting:
            continue
        case = find_discrepancy(simulated, observed_behavior(rating), item,
                                position)
        if case is None:
            continue
        cases.append(case)
        if len(cases) == n1:
            run_batch(cases)
            cases = []

    if flush_tail and cases and (mode == "iterative" or not batches):
        run_batch(cases)

    trace = OptimizationTrace(tuple(decisions), tuple(batches),
                              profile.version)
    return profile, trace


def trace_record(user_id, trace: OptimizationTrace) -> dict:
    return {
        "user": user_id,
        "decisions": [[d.position, d.item_id, d.interact, d.profile_version]
                      for d in trace.decisions],
        "batches": [
            {"boundary": b.boundary, "positions": list(b.positions),
             "labels": list(b.labels), "reasons": list(b.reasons),
             "suggestions": [[s.kind,
                              sorted(s.topics, key=str.casefold), s.text]
                             for s in b.suggestions],
             "version_after": b.version_after}
            for b in trace.batches
        ],
        "final_version": trace.final_version,
        "optimizations": trace.optimizations,
    }
