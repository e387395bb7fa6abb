"""The three-step treatment pipeline: reason, suggestions, refinement.

Each step is one completion call under a frozen prompt asset; the steps
for a batch run sequentially because each consumes the previous output.
Refinement re-parses the returned profile and enforces two constraints on
the result: statements not named by any suggestion survive byte-identical,
and the rendered profile never quotes a triggering item's title. A violated
constraint earns one reprompt, then an error.
"""

from dataclasses import dataclass

from . import backend as be
from . import prompts
from . import structured
from .errors import InvariantViolation, SimbenchError
from .profile import (
    UserProfile,
    adopt_drafts,
    check_title_leak,
    render_prose,
)
from .structured import DefectLabel

_TREATMENT_SYSTEM = (
    "You repair user preference profiles for a media recommendation "
    "service, making targeted, well-justified edits."
)

_KIND_FOR_LABEL = {
    DefectLabel.INACCURATE: {"correct"},
    DefectLabel.INCOMPLETE: {"add"},
    DefectLabel.INACCURATE_AND_INCOMPLETE: {"add", "correct"},
}


@dataclass(frozen=True)
class Reason:
    case: object
    label: DefectLabel
    explanation: str


def check_kinds(suggestions, label: DefectLabel):
    """Suggestion kinds must be consistent with the diagnosis."""
    kinds = {s.kind for s in suggestions}
    allowed = _KIND_FOR_LABEL[label]
    if not kinds <= allowed:
        raise InvariantViolation(
            f"suggestion kinds {sorted(kinds)} inconsistent with {label.value}")
    if label is DefectLabel.INACCURATE_AND_INCOMPLETE and kinds != allowed:
        raise InvariantViolation(
            "a combined defect needs both addition and correction suggestions")


def infer_reason(profile: UserProfile, case, label: DefectLabel,
                 backend, attempts: int = 3) -> Reason:
    body = prompts.TREATMENT_REASON.format(
        profile=render_prose(profile),
        item=be.item_lines(case.item.title, case.item.attributes),
        label=label.value,
    )
    request = be.chat_request(_TREATMENT_SYSTEM, body, hint="reason")
    text = be.request_payload(request, backend, "reason", attempts)
    return Reason(case=case, label=label, explanation=text)


def gen_suggestions(profile: UserProfile, case, label: DefectLabel,
                    reason: Reason, backend, attempts: int = 3):
    body = prompts.TREATMENT_SUGGESTIONS.format(
        profile=render_prose(profile),
        item=be.item_lines(case.item.title, case.item.attributes),
        label=label.value,
        reason=reason.explanation,
    )
    request = be.chat_request(_TREATMENT_SYSTEM, body, hint="suggestions")
    suggestions = be.request_payload(request, backend, "suggestions", attempts)
    check_kinds(suggestions, label)
    return suggestions


def _check_untouched(profile: UserProfile, suggestions, drafts):
    """Statements outside every suggestion's topics must survive verbatim."""
    named = {t.casefold() for s in suggestions for t in s.topics}
    for statement in profile.statements:
        if any(t.casefold() in named for t in statement.topics):
            continue
        if statement.draft() not in drafts:
            raise InvariantViolation(
                f"refinement altered untouched statement "
                f"{statement.statement_id}")


def refine(profile: UserProfile, suggestions, backend, iteration=None,
           guard_titles=(), attempts: int = 3) -> UserProfile:
    """Apply the suggestion list and return the next profile version."""
    if not suggestions:
        raise SimbenchError("cannot refine with an empty suggestion list")
    body = prompts.TREATMENT_REFINE.format(
        profile=render_prose(profile),
        suggestions=structured.render_suggestions(suggestions),
    )
    request = be.chat_request(_TREATMENT_SYSTEM, body, hint="profile")
    provenance = f"refined({iteration})" if iteration is not None else "refined"

    last_error = None
    for _ in range(2):  # one reprompt on a violated constraint
        drafts = be.request_payload(request, backend, "profile", attempts)
        candidate = adopt_drafts(profile, drafts, provenance, provenance)
        try:
            _check_untouched(profile, suggestions, drafts)
            for title in guard_titles:
                check_title_leak(candidate, title)
            return candidate
        except InvariantViolation as exc:
            last_error = exc
    raise last_error
