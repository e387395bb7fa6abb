"""Completion backends behind one uniform interface.

Three interchangeable backends expose ``complete(request) -> ChatResponse``:

* :class:`MockBackend` — a deterministic rule engine. It recovers the
  canonical prompt blocks (profile, item, history, suggestions) from the
  request and answers every pipeline role by fixed rules, so the whole
  control flow is verifiable offline. Pure function of (request, seed).
* :class:`ScriptedBackend` — replays a fixed list of responses; used for
  failure-path tests and scripted decline patterns.
* :class:`RemoteBackend` — OpenAI-style ``/v1/chat/completions`` client
  with bounded retries, a token-bucket rate limit and a concurrency cap.

Prompts embed their inputs as canonical text blocks (built by the
``*_block`` helpers below); the mock parses those same blocks back out,
which is what makes it a faithful stand-in for a live model.
"""

import os
import re
import threading
import time
from dataclasses import dataclass

import requests as _requests

from .errors import BackendError, ParseError
from . import structured
from .structured import (
    Decision,
    DefectLabel,
    StatementDraft,
    parse_structured,
    positive_text,
    corrected_text,
    join_topics,
    split_topics,
)

DEFAULT_API_KEY_ENV = "DGDPO_API_KEY"

# A genre must cover at least this fraction of the history before the mock
# profile initializer emits a statement for it.
INIT_COVERAGE = 0.2


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple
    temperature: float = 0.0
    max_tokens: int = 512
    response_schema_hint: str = None


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    latency: float = 0.0
    token_counts: tuple = None  # (prompt, completion) when the server reports them


def chat_request(system: str, user: str, hint: str = None,
                 temperature: float = 0.0, max_tokens: int = 512) -> ChatRequest:
    msgs = []
    if system:
        msgs.append(Message("system", system))
    msgs.append(Message("user", user))
    return ChatRequest(messages=tuple(msgs), temperature=temperature,
                       max_tokens=max_tokens, response_schema_hint=hint)


def complete(request: ChatRequest, backend) -> ChatResponse:
    """Validate ``request`` and dispatch it to ``backend``."""
    if not request.messages:
        raise BackendError("empty messages")
    if not 0.0 <= request.temperature <= 2.0:
        raise BackendError(f"temperature out of range: {request.temperature}")
    if request.max_tokens <= 0:
        raise BackendError(f"max_tokens must be positive: {request.max_tokens}")
    return backend.complete(request)


def request_payload(request: ChatRequest, backend, hint: str, attempts: int = 3):
    """Complete and parse, reissuing the request on parse failure.

    ``attempts`` bounds the total number of completion calls (the first
    call plus reprompts).
    """
    last = None
    for _ in range(max(1, attempts)):
        response = complete(request, backend)
        try:
            return parse_structured(response.text, hint)
        except ParseError as exc:
            last = exc
    raise ParseError(f"unparseable after {attempts} attempts: {last}")


# ---------------------------------------------------------------------------
# canonical prompt blocks

PROFILE_HEADER = "User profile:"
ITEM_HEADER = "Item:"
HISTORY_HEADER = "Interaction history:"
SUGGESTIONS_HEADER = "Suggestions:"
RECENT_HEADER = "Recent interaction:"
DIAGNOSIS_PREFIX = "Diagnosis:"


def profile_block(prose: str) -> str:
    return f"{PROFILE_HEADER}\n{prose}"


def item_lines(title: str, attributes, rating=None) -> str:
    lines = [f"Title: {title}", f"Genres: {join_topics(attributes)}"]
    if rating is not None:
        lines.append(f"Rating: {rating}")
    return "\n".join(lines)


def item_block(title: str, attributes, rating=None) -> str:
    return f"{ITEM_HEADER}\n{item_lines(title, attributes, rating)}"


def recent_interaction_block(title: str, attributes, rating=None) -> str:
    return f"{RECENT_HEADER}\n{item_lines(title, attributes, rating)}"


def history_block(entries) -> str:
    """``entries``: iterable of (title, attributes, rating-or-None)."""
    lines = [HISTORY_HEADER]
    for n, (title, attributes, rating) in enumerate(entries, start=1):
        line = f"{n}. Title: {title} | Genres: {join_topics(attributes)}"
        if rating is not None:
            line += f" | Rating: {rating}"
        lines.append(line)
    return "\n".join(lines)


def suggestions_block(suggestions) -> str:
    return f"{SUGGESTIONS_HEADER}\n{structured.render_suggestions(suggestions)}"


_TITLE_RE = re.compile(r"^Title:\s*(.+?)\s*$", re.M)
_GENRES_RE = re.compile(r"^Genres:\s*(.*?)\s*$", re.M)
_RATING_RE = re.compile(r"^Rating:\s*(\d+)\s*$", re.M)
_HISTORY_RE = re.compile(
    r"^\s*\d+\.\s*Title:\s*(.+?)\s*\|\s*Genres:\s*([^|]*?)\s*(?:\|\s*Rating:\s*(\d+)\s*)?$",
    re.M,
)
_DIAGNOSIS_RE = re.compile(r"^Diagnosis:\s*(.+?)\s*$", re.M)


def _prompt_text(request: ChatRequest) -> str:
    return "\n\n".join(m.content for m in request.messages)


def _block_after(text: str, header: str):
    """The single paragraph following ``header`` (blocks are blank-line
    separated in every canonical prompt)."""
    if header not in text:
        return None
    tail = text.split(header, 1)[1].lstrip("\n")
    return tail.split("\n\n", 1)[0]


def _extract_statements(text: str):
    block = _block_after(text, PROFILE_HEADER)
    if block is None:
        return None
    return structured.parse_statements(block)


def _extract_item(text: str):
    t = _TITLE_RE.search(text)
    g = _GENRES_RE.search(text)
    if t is None or g is None:
        return None
    r = _RATING_RE.search(text)
    return t.group(1), split_topics(g.group(1)), int(r.group(1)) if r else None


def _extract_history(text: str):
    return [
        (m.group(1), split_topics(m.group(2)),
         int(m.group(3)) if m.group(3) else None)
        for m in _HISTORY_RE.finditer(text)
    ]


def _relevant(statements, attributes):
    attrs = {a.casefold() for a in attributes}
    return [s for s in statements
            if any(t.casefold() in attrs for t in s.topics)]


def _covered(attribute: str, statements) -> bool:
    a = attribute.casefold()
    return any(t.casefold() == a for s in statements for t in s.topics)


def _positively_covered(attribute: str, statements) -> bool:
    a = attribute.casefold()
    return any(t.casefold() == a for s in statements
               if s.sentiment == "positive" for t in s.topics)


def rule_decision(statements, attributes) -> Decision:
    """The mock simulator's decision rule.

    Interact iff some relevant statement is positive and none is negative;
    items that overlap no statement at all are declined by convention.
    """
    relevant = _relevant(statements, attributes)
    negatives = [s for s in relevant if s.sentiment == "negative"]
    positives = [s for s in relevant if s.sentiment == "positive"]
    if negatives:
        topics = sorted({t for s in negatives for t in s.topics}, key=str.casefold)
        return Decision(False, f"Declined: averse to {', '.join(topics)}.")
    if positives:
        topics = sorted({t for s in positives for t in s.topics}, key=str.casefold)
        return Decision(True, f"Matches stated interest in {', '.join(topics)}.")
    return Decision(False, "Declined: no stated preference covers this item.")


def rule_label(statements, attributes) -> DefectLabel:
    """The mock diagnostic rule (inverse of the defect synthesis edits).

    Inaccurate evidence: a relevant negative statement contradicts the
    observed interaction. Incomplete evidence: some item attribute is
    covered by no statement at all.
    """
    relevant = _relevant(statements, attributes)
    inaccurate = any(s.sentiment == "negative" for s in relevant)
    incomplete = any(not _covered(a, statements) for a in attributes)
    if inaccurate and incomplete:
        return DefectLabel.INACCURATE_AND_INCOMPLETE
    if inaccurate:
        return DefectLabel.INACCURATE
    return DefectLabel.INCOMPLETE


def rule_reason(statements, attributes, label: DefectLabel) -> str:
    uncovered = sorted((a for a in attributes if not _covered(a, statements)),
                       key=str.casefold)
    contradicted = sorted(
        {t for s in _relevant(statements, attributes)
         if s.sentiment == "negative" for t in s.topics},
        key=str.casefold)
    parts = []
    if label in (DefectLabel.INACCURATE, DefectLabel.INACCURATE_AND_INCOMPLETE):
        shown = ", ".join(contradicted) if contradicted else "this item"
        parts.append(f"the profile states an aversion to {shown} that "
                     "contradicts the observed interaction")
    if label in (DefectLabel.INCOMPLETE, DefectLabel.INACCURATE_AND_INCOMPLETE):
        shown = ", ".join(uncovered) if uncovered else ", ".join(
            sorted(attributes, key=str.casefold))
        parts.append(f"the profile lacks any preference covering {shown}")
    text = " and ".join(parts) + "."
    return text[0].upper() + text[1:]


def rule_suggestions(statements, attributes, label: DefectLabel):
    """Kind-consistent edit proposals: corrections for contradictions,
    additions for missing coverage."""
    out = []
    if label in (DefectLabel.INACCURATE, DefectLabel.INACCURATE_AND_INCOMPLETE):
        for s in _relevant(statements, attributes):
            if s.sentiment == "negative":
                out.append(structured.Suggestion(
                    "correct", s.topics, corrected_text(s.topics)))
    if label is DefectLabel.INCOMPLETE:
        missing = [a for a in sorted(attributes, key=str.casefold)
                   if not _positively_covered(a, statements)]
        out.extend(structured.Suggestion(
            "add", frozenset([a]), positive_text([a])) for a in missing)
    if label is DefectLabel.INACCURATE_AND_INCOMPLETE:
        uncovered = [a for a in sorted(attributes, key=str.casefold)
                     if not _covered(a, statements)]
        out.extend(structured.Suggestion(
            "add", frozenset([a]), positive_text([a])) for a in uncovered)
    return tuple(out)


def apply_suggestions(statements, suggestions):
    """Structural application of treatment suggestions, in list order."""
    current = list(statements)
    for sug in suggestions:
        if sug.kind == "add":
            current.append(StatementDraft("positive", sug.topics, sug.text))
        elif sug.kind == "correct":
            topics = {t.casefold() for t in sug.topics}
            for i, s in enumerate(current):
                if s.sentiment == "negative" and any(
                        t.casefold() in topics for t in s.topics):
                    current[i] = StatementDraft("positive", s.topics, sug.text)
                    break
    return tuple(current)


class MockBackend:
    """Deterministic rule-based completion engine.

    Dispatches on the request's schema hint and on which canonical blocks
    appear in the prompt; the response text is a pure function of
    (request, seed).
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.backend_id = f"mock-{seed}"

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = self._answer(request)
        return ChatResponse(text=text, backend_id=self.backend_id, latency=0.0)

    def _answer(self, request: ChatRequest) -> str:
        hint = request.response_schema_hint
        prompt = _prompt_text(request)
        if hint == "decision":
            return self._decision(prompt)
        if hint == "diagnosis":
            return self._diagnosis(prompt)
        if hint == "reason":
            return self._reason(prompt)
        if hint == "suggestions":
            return self._suggestions(prompt)
        if hint == "profile":
            return self._profile(prompt)
        raise BackendError(f"mock backend cannot answer hint {hint!r}")

    def _require(self, value, what: str):
        if value is None:
            raise BackendError(f"mock backend: prompt lacks {what}")
        return value

    def _decision(self, prompt: str) -> str:
        statements = self._require(_extract_statements(prompt), "a profile block")
        _, attrs, _ = self._require(_extract_item(prompt), "an item block")
        return structured.render_decision(rule_decision(statements, attrs))

    def _diagnosis(self, prompt: str) -> str:
        statements = self._require(_extract_statements(prompt), "a profile block")
        _, attrs, _ = self._require(_extract_item(prompt), "an item block")
        return structured.render_diagnosis(rule_label(statements, attrs))

    def _label_from(self, prompt: str) -> DefectLabel:
        m = _DIAGNOSIS_RE.search(prompt)
        self._require(m, "a diagnosis line")
        return structured.parse_diagnosis(m.group(1))

    def _reason(self, prompt: str) -> str:
        statements = self._require(_extract_statements(prompt), "a profile block")
        _, attrs, _ = self._require(_extract_item(prompt), "an item block")
        label = self._label_from(prompt)
        return structured.render_reason(rule_reason(statements, attrs, label))

    def _suggestions(self, prompt: str) -> str:
        statements = self._require(_extract_statements(prompt), "a profile block")
        _, attrs, _ = self._require(_extract_item(prompt), "an item block")
        label = self._label_from(prompt)
        suggestions = rule_suggestions(statements, attrs, label)
        if not suggestions:
            return "No changes required."
        return structured.render_suggestions(suggestions)

    def _profile(self, prompt: str) -> str:
        if HISTORY_HEADER in prompt:
            return self._init_profile(prompt)
        statements = self._require(_extract_statements(prompt), "a profile block")
        if SUGGESTIONS_HEADER in prompt:
            suggestions = structured.parse_suggestions(
                _block_after(prompt, SUGGESTIONS_HEADER))
            return structured.render_statements(
                apply_suggestions(statements, suggestions))
        if RECENT_HEADER in prompt:
            _, attrs, _ = self._require(
                _extract_item(prompt.split(RECENT_HEADER, 1)[1]),
                "a recent-interaction block")
            return structured.render_statements(
                self._update(statements, attrs))
        raise BackendError("mock backend: profile prompt lacks a task block")

    @staticmethod
    def _init_profile(prompt: str) -> str:
        history = _extract_history(prompt)
        if not history:
            raise BackendError("mock backend: empty history block")
        counts = {}
        for _, attrs, _ in history:
            for a in attrs:
                counts[a] = counts.get(a, 0) + 1
        drafts = tuple(
            StatementDraft("positive", frozenset([g]), positive_text([g]))
            for g in sorted(counts, key=str.casefold)
            if counts[g] / len(history) >= INIT_COVERAGE
        )
        return structured.render_statements(drafts)

    @staticmethod
    def _update(statements, attrs):
        """Minimal incremental edit: fix one contradiction, else add one
        missing preference."""
        current = list(statements)
        for i, s in enumerate(current):
            if s.sentiment == "negative" and _relevant([s], attrs):
                current[i] = StatementDraft("positive", s.topics,
                                            corrected_text(s.topics))
                return tuple(current)
        for a in sorted(attrs, key=str.casefold):
            if not _positively_covered(a, statements):
                return tuple(statements) + (
                    StatementDraft("positive", frozenset([a]), positive_text([a])),)
        return tuple(current)


class ScriptedBackend:
    """Replays a fixed response list; raises when the script runs dry."""

    def __init__(self, responses, backend_id: str = "scripted"):
        self._responses = list(responses)
        self._next = 0
        self.backend_id = backend_id

    @property
    def calls(self) -> int:
        return self._next

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self._next >= len(self._responses):
            raise BackendError("scripted backend exhausted")
        text = self._responses[self._next]
        self._next += 1
        return ChatResponse(text=text, backend_id=self.backend_id, latency=0.0)


class ScriptedDecisionBackend:
    """Answers decision prompts from a yes/no pattern, in call order."""

    def __init__(self, pattern, backend_id: str = "scripted-decisions"):
        self._pattern = [bool(p) for p in pattern]
        self._next = 0
        self.backend_id = backend_id

    def complete(self, request: ChatRequest) -> ChatResponse:
        if request.response_schema_hint != "decision":
            raise BackendError("scripted decision backend: decision prompts only")
        if self._next >= len(self._pattern):
            raise BackendError("decision pattern exhausted")
        interact = self._pattern[self._next]
        self._next += 1
        decision = Decision(interact, "Scripted decision.")
        return ChatResponse(text=structured.render_decision(decision),
                            backend_id=self.backend_id, latency=0.0)


class TokenBucket:
    """Thread-safe token bucket; ``clock``/``sleep`` injectable for tests."""

    def __init__(self, rate_per_s: float, capacity: float = None,
                 clock=time.monotonic, sleep=time.sleep):
        self.rate = float(rate_per_s)
        self.capacity = capacity if capacity is not None else max(1.0, self.rate)
        self._tokens = self.capacity
        self._stamp = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self):
        with self._lock:
            now = self._clock()
            self._tokens = min(self.capacity,
                               self._tokens + (now - self._stamp) * self.rate)
            self._stamp = now
            if self._tokens >= 1.0:
                self._tokens -= 1.0
                return
            wait = (1.0 - self._tokens) / self.rate
            self._tokens = 0.0
        self._sleep(wait)


class RemoteBackend:
    """OpenAI-style chat-completions client.

    Credential comes from the ``DGDPO_API_KEY`` environment variable;
    transient failures (transport errors, 429 and 5xx statuses) are retried
    with exponential backoff up to ``max_attempts`` total attempts.
    """

    RETRYABLE = frozenset({429, 500, 502, 503, 504})

    def __init__(self, base_url: str, model: str,
                 api_key_env: str = DEFAULT_API_KEY_ENV,
                 max_attempts: int = 3, rate_per_s: float = 5.0,
                 max_concurrency: int = 4, timeout: float = 60.0,
                 backoff_base: float = 0.5, session=None, sleep=time.sleep):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.max_attempts = max(1, max_attempts)
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.backend_id = f"remote:{model}"
        self._bucket = TokenBucket(rate_per_s)
        self._slots = threading.BoundedSemaphore(max(1, max_concurrency))
        self._session = session if session is not None else _requests.Session()
        self._sleep = sleep

    def _body(self, request: ChatRequest) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content}
                         for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        started = time.perf_counter()
        last_error = None
        with self._slots:
            for attempt in range(self.max_attempts):
                if attempt:
                    self._sleep(self.backoff_base * (2 ** (attempt - 1)))
                self._bucket.acquire()
                try:
                    resp = self._session.post(url, json=self._body(request),
                                              headers=headers,
                                              timeout=self.timeout)
                except _requests.RequestException as exc:
                    last_error = f"transport failure: {exc}"
                    continue
                if resp.status_code in self.RETRYABLE:
                    last_error = f"retryable status {resp.status_code}"
                    continue
                if resp.status_code != 200:
                    raise BackendError(
                        f"remote returned status {resp.status_code}")
                return self._parse(resp, started)
        raise BackendError(
            f"remote failed after {self.max_attempts} attempts: {last_error}")

    def _parse(self, resp, started: float) -> ChatResponse:
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed remote payload: {exc}")
        if not text:
            raise BackendError("remote returned empty text")
        usage = payload.get("usage") or {}
        counts = None
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            counts = (usage["prompt_tokens"], usage["completion_tokens"])
        return ChatResponse(text=text, backend_id=self.backend_id,
                            latency=time.perf_counter() - started,
                            token_counts=counts)
