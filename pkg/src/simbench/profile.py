"""Versioned structured user profiles and their update paths.

A profile is an immutable ordered list of preference statements plus the
complete history of prior versions, so every optimization iteration and
arena round leaves an auditable trace. Statements are structured (topics +
sentiment + one-sentence text); prose is only a rendering of them, which
keeps perturbation and diagnosis mechanical.
"""

from dataclasses import dataclass

from . import backend as be
from . import structured
from .errors import InvariantViolation, SimbenchError
from .structured import StatementDraft

UPDATE_STRATEGIES = ("none", "without_gt", "with_gt")

_INIT_SYSTEM = (
    "You build concise user preference profiles for a media "
    "recommendation service."
)
_INIT_TASK = (
    "Summarize this user's tastes from the interaction history above. "
    "Answer only with preference statements, one per line, in the form:\n"
    "- (positive|negative) [Topic1; Topic2] one-sentence description\n"
    "Do not mention any specific item titles."
)
_UPDATE_SYSTEM = (
    "You maintain user preference profiles for a media recommendation "
    "service."
)
_UPDATE_TASK = (
    "The user just interacted with the item above. Make a minimal, "
    "incremental adjustment to the profile: add at most one statement or "
    "adjust the sentiment of at most one statement, preserving all other "
    "statements verbatim. Keep the profile coherent and do not mention the "
    "item's title. Answer with the full updated profile, one statement per "
    "line, in the form:\n"
    "- (positive|negative) [Topic1; Topic2] one-sentence description"
)


@dataclass(frozen=True)
class PreferenceStatement:
    statement_id: str
    topics: frozenset
    sentiment: str  # "positive" | "negative"
    text: str
    provenance: str  # "initial" | "refined(i)" | "arena(r)" | "update"

    def draft(self) -> StatementDraft:
        return StatementDraft(self.sentiment, self.topics, self.text)


@dataclass(frozen=True)
class HistoryEntry:
    version: int
    cause: str  # what transformed this version into the next
    statements: tuple


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    statements: tuple = ()
    version: int = 0
    history: tuple = ()  # one HistoryEntry per prior version


def render_prose(profile: UserProfile) -> str:
    """Canonical deterministic prose; independent of statement ids."""
    return structured.render_statements([s.draft() for s in profile.statements])


def relevant_statements(profile: UserProfile, item):
    """Statements whose topics intersect the item's attributes."""
    attrs = {a.casefold() for a in item.attributes}
    return [s for s in profile.statements
            if any(t.casefold() in attrs for t in s.topics)]


def _next_id(statements) -> int:
    best = 0
    for s in statements:
        if s.statement_id.startswith("s") and s.statement_id[1:].isdigit():
            best = max(best, int(s.statement_id[1:]))
    return best + 1


def adopt_drafts(profile: UserProfile, drafts, cause: str,
                 provenance: str) -> UserProfile:
    """New profile version from parsed drafts.

    Drafts that exactly match an existing statement keep its identity and
    provenance; anything else gets a fresh id tagged ``provenance``.
    """
    pool = {}
    for s in profile.statements:
        pool.setdefault(s.draft(), []).append(s)
    counter = _next_id(profile.statements)
    adopted = []
    for d in drafts:
        if pool.get(d):
            adopted.append(pool[d].pop(0))
        else:
            adopted.append(PreferenceStatement(
                statement_id=f"s{counter}", topics=d.topics,
                sentiment=d.sentiment, text=d.text, provenance=provenance))
            counter += 1
    entry = HistoryEntry(profile.version, cause, profile.statements)
    return UserProfile(user_id=profile.user_id, statements=tuple(adopted),
                       version=profile.version + 1,
                       history=profile.history + (entry,))


def init_profile(d_ini, backend, user_id: str = "user",
                 attempts: int = 3) -> UserProfile:
    """Single-step profile inference over the initialization portion.

    ``d_ini`` is a sequence of (item, rating) pairs. One completion call
    (reprompted on parse failure up to ``attempts`` total calls) yields the
    version-0 profile.
    """
    entries = list(d_ini)
    if not entries:
        raise SimbenchError("cannot initialize a profile from an empty d_ini")
    block = be.history_block(
        (item.title, item.attributes, rating) for item, rating in entries)
    request = be.chat_request(_INIT_SYSTEM, f"{block}\n\n{_INIT_TASK}",
                              hint="profile")
    drafts = be.request_payload(request, backend, "profile", attempts)
    statements = tuple(
        PreferenceStatement(statement_id=f"s{n}", topics=d.topics,
                            sentiment=d.sentiment, text=d.text,
                            provenance="initial")
        for n, d in enumerate(drafts, start=1))
    return UserProfile(user_id=user_id, statements=statements)


def check_title_leak(profile: UserProfile, title: str):
    """The rendered profile must never quote the triggering item's title."""
    if title and title in render_prose(profile):
        raise InvariantViolation(
            f"profile text leaks the item title {title!r}")


def _check_minimal(old_drafts, new_drafts):
    """Arena updates may add one statement or adjust one sentiment."""
    if new_drafts == old_drafts:
        return
    if len(new_drafts) == len(old_drafts) + 1:
        extra = list(new_drafts)
        for d in old_drafts:
            if d in extra:
                extra.remove(d)
        if len(extra) == 1:
            return
    if len(new_drafts) == len(old_drafts):
        changed = [i for i, (a, b) in enumerate(zip(old_drafts, new_drafts))
                   if a != b]
        if len(changed) == 1:
            a, b = old_drafts[changed[0]], new_drafts[changed[0]]
            if a.topics == b.topics and a.sentiment != b.sentiment:
                return
    raise InvariantViolation("profile update was not a minimal adjustment")


def update_profile(profile: UserProfile, strategy: str,
                   selected=None, gt=None, backend=None,
                   round_index=None) -> UserProfile:
    """Apply one arena-round profile update under the chosen strategy.

    ``none`` leaves the profile untouched; ``without_gt`` updates from the
    simulator's selection (no-op when nothing was selected); ``with_gt``
    updates from the ground-truth item every round. Whenever an update is
    actually attempted the version advances, even if the backend decided
    no statement needed editing, so the version history records every
    update event.
    """
    if strategy not in UPDATE_STRATEGIES:
        raise ValueError(f"unknown update strategy: {strategy!r}")
    if strategy == "none":
        return profile
    if strategy == "without_gt":
        if selected is None:
            return profile
        target = selected
    else:
        if gt is None:
            raise SimbenchError("with_gt strategy requires the ground-truth item")
        target = gt

    prompt = "\n\n".join([
        be.profile_block(render_prose(profile)),
        be.recent_interaction_block(target.title, target.attributes),
        _UPDATE_TASK,
    ])
    request = be.chat_request(_UPDATE_SYSTEM, prompt, hint="profile")
    old_drafts = tuple(s.draft() for s in profile.statements)
    provenance = f"arena({round_index})" if round_index is not None else "update"
    cause = provenance

    last_error = None
    for _ in range(2):  # one reprompt on a violated constraint
        drafts = be.request_payload(request, backend, "profile", attempts=3)
        candidate = adopt_drafts(profile, drafts, cause, provenance)
        try:
            _check_minimal(old_drafts, drafts)
            check_title_leak(candidate, target.title)
            return candidate
        except InvariantViolation as exc:
            last_error = exc
    raise last_error


def profile_record(profile: UserProfile, cause: str) -> dict:
    """JSON-ready record of the current version for the append-only store."""
    return {
        "user": profile.user_id,
        "version": profile.version,
        "cause": cause,
        "statements": [
            {"id": s.statement_id, "sentiment": s.sentiment,
             "topics": sorted(s.topics, key=str.casefold), "text": s.text,
             "provenance": s.provenance}
            for s in profile.statements
        ],
    }
