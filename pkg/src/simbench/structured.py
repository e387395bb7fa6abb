"""Structured payloads exchanged with completion backends.

Every model-facing role in the pipeline requests its answer as labeled
key/value lines rather than free prose, so parsing is deterministic and
round-trips exactly: ``parse_structured(render(x), hint) == x`` for each
payload kind. Parsers tolerate surrounding prose but never guess — if no
well-formed payload is present they raise :class:`ParseError`.

Payload kinds (by schema hint):

============ ==========================================================
hint         payload
============ ==========================================================
decision     :class:`Decision`
diagnosis    :class:`DefectLabel`
reason       ``str`` (one-line explanation)
suggestions  ``tuple[Suggestion, ...]``
profile      ``tuple[StatementDraft, ...]``
============ ==========================================================
"""

import enum
import re
from dataclasses import dataclass, field

from .errors import ParseError

SCHEMA_HINTS = ("decision", "diagnosis", "reason", "suggestions", "profile")

EMPTY_PROFILE_SENTINEL = "No known preferences."


class DefectLabel(enum.Enum):
    """The three-way profile defect taxonomy."""

    INACCURATE = "Inaccurate"
    INCOMPLETE = "Incomplete"
    INACCURATE_AND_INCOMPLETE = "Inaccurate & Incomplete"


@dataclass(frozen=True)
class Decision:
    """A simulator interaction decision plus its stated rationale."""

    interact: bool
    rationale: str
    exit: bool = False


@dataclass(frozen=True)
class StatementDraft:
    """A preference statement as it appears in rendered profile text.

    Drafts carry no identity or provenance; the profile module attaches
    those when it adopts a draft into a versioned profile.
    """

    sentiment: str  # "positive" | "negative"
    topics: frozenset = field(default_factory=frozenset)
    text: str = ""


@dataclass(frozen=True)
class Suggestion:
    """One targeted profile edit proposed by the treatment step."""

    kind: str  # "add" | "correct"
    topics: frozenset = field(default_factory=frozenset)
    text: str = ""


def join_topics(topics) -> str:
    return "; ".join(sorted(topics, key=str.casefold))


def split_topics(raw: str) -> frozenset:
    return frozenset(t.strip() for t in raw.split(";") if t.strip())


def describe_topics(topics) -> str:
    """Human-ish conjunction of topics, used inside statement text."""
    ordered = sorted(topics, key=str.casefold)
    if len(ordered) == 1:
        return ordered[0]
    return ", ".join(ordered[:-1]) + " and " + ordered[-1]


def positive_text(topics) -> str:
    """Template for a freshly added positive preference statement."""
    return f"Strong interest in {describe_topics(topics)}."


def corrected_text(topics) -> str:
    """Template for a negative statement corrected back to positive."""
    return f"Have a high interest in {describe_topics(topics)}."


def negated_text(topics) -> str:
    """Template for a positive statement flipped to the opposite sentiment."""
    return f"Averse to {describe_topics(topics)} content."


# ---------------------------------------------------------------------------
# canonical renderings


def render_decision(decision: Decision) -> str:
    if decision.exit:
        verdict = "exit"
    else:
        verdict = "yes" if decision.interact else "no"
    return f"Decision: {verdict}\nReason: {decision.rationale}"


def render_diagnosis(label: DefectLabel) -> str:
    return f"Label: {label.value}"


def render_reason(text: str) -> str:
    return f"Reason: {text}"


def render_suggestions(suggestions) -> str:
    lines = [
        f"- {s.kind} [{join_topics(s.topics)}] {s.text}" for s in suggestions
    ]
    return "\n".join(lines)


def render_statements(drafts) -> str:
    """Canonical profile prose: one sentiment-labeled line per statement."""
    if not drafts:
        return EMPTY_PROFILE_SENTINEL
    return "\n".join(
        f"- ({d.sentiment}) [{join_topics(d.topics)}] {d.text}" for d in drafts
    )


# ---------------------------------------------------------------------------
# parsers

_DECISION_RE = re.compile(r"decision\s*[:=]\s*(yes|no|true|false|exit)\b", re.I)
_REASON_RE = re.compile(r"reason\s*[:=]\s*(.+)", re.I)
_LABEL_LINE_RE = re.compile(r"label\s*[:=]\s*([^\n]+)", re.I)
_SUGGESTION_RE = re.compile(
    r"^\s*-\s*(add|correct)\s*\[([^\]]*)\]\s*(.+?)\s*$", re.I | re.M
)
_STATEMENT_RE = re.compile(
    r"^\s*-\s*\((positive|negative)\)\s*\[([^\]]*)\]\s*(.+?)\s*$", re.I | re.M
)
_DASH_LINE_RE = re.compile(r"^\s*-\s+(.+?)\s*$", re.M)

_LABEL_ALIASES = {
    "inaccurate": DefectLabel.INACCURATE,
    "incomplete": DefectLabel.INCOMPLETE,
    "inaccurate&incomplete": DefectLabel.INACCURATE_AND_INCOMPLETE,
    "inaccurateandincomplete": DefectLabel.INACCURATE_AND_INCOMPLETE,
    "both": DefectLabel.INACCURATE_AND_INCOMPLETE,
}


def parse_decision(text: str) -> Decision:
    m = _DECISION_RE.search(text)
    if m is None:
        raise ParseError("no decision payload found")
    verdict = m.group(1).lower()
    r = _REASON_RE.search(text)
    rationale = r.group(1).strip() if r else ""
    if not rationale:
        raise ParseError("decision payload missing a rationale")
    if verdict == "exit":
        return Decision(interact=False, rationale=rationale, exit=True)
    return Decision(interact=verdict in ("yes", "true"), rationale=rationale)


def parse_diagnosis(text: str) -> DefectLabel:
    candidates = []
    m = _LABEL_LINE_RE.search(text)
    if m:
        candidates.append(m.group(1))
    candidates.append(text)
    for raw in candidates:
        key = re.sub(r"[^a-z&]+", "", raw.lower().replace(" and ", "&"))
        if key in _LABEL_ALIASES:
            return _LABEL_ALIASES[key]
    # fall back to scanning for the longest alias mentioned anywhere
    lowered = re.sub(r"\s+and\s+", "&", text.lower())
    lowered = re.sub(r"[^a-z&]+", "", lowered)
    for key in ("inaccurate&incomplete", "incomplete", "inaccurate"):
        if key in lowered:
            return _LABEL_ALIASES[key]
    raise ParseError("no defect label found")


def parse_reason(text: str) -> str:
    m = _REASON_RE.search(text)
    if m is None or not m.group(1).strip():
        raise ParseError("no reason payload found")
    return m.group(1).strip()


def parse_suggestions(text: str):
    found = tuple(
        Suggestion(kind=m.group(1).lower(), topics=split_topics(m.group(2)),
                   text=m.group(3))
        for m in _SUGGESTION_RE.finditer(text)
    )
    if not found:
        raise ParseError("no suggestion payload found")
    return found


def parse_statements(text: str):
    """Statement lines from profile text.

    Malformed statement lines (a dash item without the sentiment/topic
    tags) are kept as single-topic "misc" statements instead of being
    dropped, so no returned preference is silently lost.
    """
    found = []
    for m in _DASH_LINE_RE.finditer(text):
        sm = _STATEMENT_RE.match(m.group(0))
        if sm:
            found.append(StatementDraft(sentiment=sm.group(1).lower(),
                                        topics=split_topics(sm.group(2)),
                                        text=sm.group(3)))
        else:
            found.append(StatementDraft(sentiment="positive",
                                        topics=frozenset({"misc"}),
                                        text=m.group(1)))
    if found:
        return tuple(found)
    if EMPTY_PROFILE_SENTINEL in text:
        return ()
    raise ParseError("no profile payload found")


_PARSERS = {
    "decision": parse_decision,
    "diagnosis": parse_diagnosis,
    "reason": parse_reason,
    "suggestions": parse_suggestions,
    "profile": parse_statements,
}

_RENDERERS = {
    "decision": render_decision,
    "diagnosis": render_diagnosis,
    "reason": render_reason,
    "suggestions": render_suggestions,
    "profile": render_statements,
}


def parse_structured(text: str, hint: str):
    """Extract the first well-formed payload matching ``hint``.

    Raises ``ValueError`` for an unknown hint and :class:`ParseError` when
    nothing parseable is present (including empty input).
    """
    if hint not in _PARSERS:
        raise ValueError(f"unknown schema hint: {hint!r}")
    if not text or not text.strip():
        raise ParseError("empty text")
    return _PARSERS[hint](text)


def render_payload(payload, hint: str) -> str:
    """Canonical rendering; inverse of :func:`parse_structured`."""
    if hint not in _RENDERERS:
        raise ValueError(f"unknown schema hint: {hint!r}")
    return _RENDERERS[hint](payload)
