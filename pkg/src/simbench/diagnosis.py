"""Profile defect diagnosis: a completion-backed path and a rule oracle.

Both map (profile, discrepancy case) to one of the three defect labels.
The completion path sends the frozen system/instruction assets plus the
canonical input rendering; the oracle applies the inverse of the defect
synthesis rules directly to the structured profile and never needs a
backend, which makes it the ground-truth judge for synthetic corpora.
"""

from dataclasses import dataclass

from . import backend as be
from . import prompts
from .profile import UserProfile, render_prose
from .structured import DefectLabel

_DECLINE_NOTE = "Simulated decision:\nDecision: no\nReason: {reason}"


@dataclass(frozen=True)
class Diagnosis:
    label: DefectLabel
    backend_id: str
    raw_text: str = None
    weak_evidence: bool = False


def diag_input(profile: UserProfile, item, decline_reason: str = None) -> str:
    """Canonical diagnostic input: profile, item info, simulated decline.

    Shared verbatim with the emitted fine-tuning corpus so the served
    diagnostic model sees exactly what it was trained on.
    """
    parts = [
        be.profile_block(render_prose(profile)),
        be.item_block(item.title, item.attributes),
    ]
    if decline_reason:
        parts.append(_DECLINE_NOTE.format(reason=decline_reason))
    return "\n\n".join(parts)


def diagnose(profile: UserProfile, case, backend, attempts: int = 3) -> Diagnosis:
    """One completion call under the frozen diagnostic prompt."""
    body = "\n\n".join([
        prompts.DIAGNOSTIC_INSTRUCTION,
        diag_input(profile, case.item, case.simulated.rationale),
    ])
    request = be.chat_request(prompts.DIAGNOSTIC_SYSTEM, body, hint="diagnosis")
    label = be.request_payload(request, backend, "diagnosis", attempts)
    return Diagnosis(label=label, backend_id=backend.backend_id)


def oracle_diagnose(profile: UserProfile, case) -> Diagnosis:
    """Deterministic diagnosis by inverting the synthesis rules.

    Inaccurate evidence: a statement relevant to the item is negative.
    Incomplete evidence: some item attribute is covered by no statement at
    all. With neither kind of evidence the label falls back to Incomplete,
    flagged weak: in this pipeline every case is a declined observed
    interaction, so missing positive evidence is the default explanation.
    """
    attrs = {a.casefold() for a in case.item.attributes}
    inaccurate = any(
        s.sentiment == "negative" and any(t.casefold() in attrs for t in s.topics)
        for s in profile.statements)
    covered = {t.casefold() for s in profile.statements for t in s.topics}
    incomplete = any(a not in covered for a in attrs)
    if inaccurate and incomplete:
        label = DefectLabel.INACCURATE_AND_INCOMPLETE
    elif inaccurate:
        label = DefectLabel.INACCURATE
    else:
        label = DefectLabel.INCOMPLETE
    return Diagnosis(label=label, backend_id="oracle",
                     weak_evidence=not inaccurate and not incomplete)
