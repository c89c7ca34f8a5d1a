"""Chat-model bridge: prompt assembly, response parsing, backends.

Prompt texts are frozen verbatim; assembly is deterministic so identical
inputs produce byte-identical prompts. Embedded values (elements, statements,
attribute lists, previous exchanges) sit inside angle-bracket delimiters so
the model can tell instruction from payload.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import requests

from .dom_snapshot import WebElementRecord, serialize_record
from .errors import (
    AuthError,
    DegenerateInput,
    EmptyCandidates,
    MalformedResponse,
    NoInconsistency,
    NoRepairFound,
    TokenLimitError,
    TransportError,
)
from .matchers import CandidateRanking

# --- attribute vocabulary ------------------------------------------------------

# Display casing for the twelve element attributes a model may cite.
CANONICAL_ATTRIBUTES = (
    "id", "name", "class", "xpath", "text", "tagName", "linkText",
    "x", "y", "width", "height", "isLeaf",
)
# Collective names that stand for attribute groups.
ALIAS_ATTRIBUTES = ("location", "position", "size")

_DISPLAY_BY_LOWER = {name.lower(): name for name in CANONICAL_ATTRIBUTES}
_DISPLAY_BY_LOWER.update({name: name for name in ALIAS_ATTRIBUTES})
_DISPLAY_BY_LOWER["classname"] = "class"

STRUCTURAL_ATTRIBUTES = frozenset({"xpath", "x", "y", "isLeaf"})
NON_STRUCTURAL_ATTRIBUTES = frozenset(
    {"id", "name", "class", "text", "tagName", "linkText", "width", "height"}
)


def recognize_attribute(raw: str) -> Optional[str]:
    """Map a mentioned attribute name to display form, or None if unknown."""
    return _DISPLAY_BY_LOWER.get(raw.strip().lower())


def mention_class(display_name: str) -> str:
    """'structural' or 'non-structural' for a recognized mention."""
    if display_name in ("location", "position"):
        return "structural"
    if display_name == "size":
        return "non-structural"
    if display_name in STRUCTURAL_ATTRIBUTES:
        return "structural"
    if display_name in NON_STRUCTURAL_ATTRIBUTES:
        return "non-structural"
    raise ValueError(f"not a recognized attribute: {display_name!r}")


# --- chat types ------------------------------------------------------------------

@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class RunConfig:
    model_id: str = "gpt-3.5-turbo"
    temperature: float = 0.8
    runs_per_breakage: int = 4
    request_timeout: float = 60.0
    max_retries: int = 3


@dataclass(frozen=True)
class MatchDecision:
    """A parsed selection answer: which candidate, justified by what."""

    selected_numeric_id: int
    mentioned_attributes: tuple[str, ...]
    unrecognized_mentions: tuple[str, ...] = ()
    raw_text: str = ""


# --- prompt patterns --------------------------------------------------------------

SYSTEM_ROLE_TEXT = "You are a web UI test script repair tool."

MATCH_TASK_TEXT = (
    "To repair the broken statement, you need to choose the element most similar "
    "to the target element from the given candidate element list firstly.\n"
    "Give me your selected element's numericId and a brief explanation containing "
    "the attributes that are most similar to the target element."
)

MATCH_FORMAT_TEXT = (
    "Your answer should follow the format of this example:\n"
    "\"The most similar element's numericId: 1. "
    "Because they share the most similar attributes: id, xpath, text.\""
)

REPAIR_CHOSEN_TEMPLATE = (
    "To repair the broken statement, you chose the element <{element}> as the most "
    "similar to the target element from the given candidate element list."
)

REPAIR_TASK_TEXT = (
    "Now based on your selected element, update the locator and outdated assertion "
    "of the broken statement. Give the result of repaired statement."
)

PREVIOUS_EXCHANGE_TEMPLATE = (
    "This is a previous prompt: <{prompt}>\n"
    "This is your previous answer: <{answer}>"
)

INCONSISTENT_TEMPLATE = (
    "But your explanation for attributes <{attributes}> are inconsistent with your "
    "selection and this will influence the correctness of your answer. "
    "Please answer again."
)

MATCH_INPUT_TEMPLATE = "Target element: <{target}>\nCandidate elements: <{candidates}>"

REPAIR_INPUT_TEMPLATE = "Broken statement: <{statement}>"


def render_messages(messages: Sequence[ChatMessage]) -> str:
    """Flatten a prompt to text for embedding inside another prompt."""
    return "\n".join(message.content for message in messages)


def build_matching_prompt(
    target: WebElementRecord, ranking: CandidateRanking
) -> list[ChatMessage]:
    """System + user messages asking the model to pick the most similar
    candidate. Candidates appear in rank order, one serialized element per
    line."""
    if not ranking.entries:
        raise EmptyCandidates(f"no candidates for target {ranking.target_xpath!r}")
    candidate_block = "\n".join(
        serialize_record(entry.element) for entry in ranking.entries
    )
    user = "\n".join([
        MATCH_TASK_TEXT,
        MATCH_FORMAT_TEXT,
        MATCH_INPUT_TEMPLATE.format(
            target=serialize_record(target), candidates=candidate_block
        ),
    ])
    return [ChatMessage("system", SYSTEM_ROLE_TEXT), ChatMessage("user", user)]


def build_repair_prompt(
    selected: WebElementRecord, broken_statement: str
) -> list[ChatMessage]:
    """System + user messages asking for the repaired statement."""
    user = "\n".join([
        REPAIR_CHOSEN_TEMPLATE.format(element=serialize_record(selected)),
        REPAIR_TASK_TEXT,
        REPAIR_INPUT_TEMPLATE.format(statement=broken_statement),
    ])
    return [ChatMessage("system", SYSTEM_ROLE_TEXT), ChatMessage("user", user)]


def build_self_correction_prompt(
    previous_prompt: Sequence[ChatMessage],
    previous_answer: str,
    inconsistent_attributes: Sequence[str],
) -> list[ChatMessage]:
    """Single user message replaying the previous exchange and naming the
    attributes whose explanation contradicted the selection."""
    if not inconsistent_attributes:
        raise NoInconsistency("self-correction needs at least one inconsistent attribute")
    content = "\n".join([
        PREVIOUS_EXCHANGE_TEMPLATE.format(
            prompt=render_messages(previous_prompt), answer=previous_answer
        ),
        INCONSISTENT_TEMPLATE.format(attributes=", ".join(inconsistent_attributes)),
    ])
    return [ChatMessage("user", content)]


# --- response parsing ---------------------------------------------------------------

_NUMERIC_ID_TOKEN = re.compile(r"numericid", re.IGNORECASE)
_ATTRIBUTE_SECTION = re.compile(r"attributes\b[:\s]*([^.!?\n]*)", re.IGNORECASE)
_MENTION_SPLIT = re.compile(r",|;|\band\b", re.IGNORECASE)
_WORD = re.compile(r"[A-Za-z][A-Za-z]*")


def parse_match_response(text: str) -> MatchDecision:
    """Extract the selected numericId and the cited attribute names.

    The id is the first integer after a case-insensitive "numericId" token;
    without one the response is malformed. Attribute names are read from the
    clause after the first "attributes" token up to the end of the sentence,
    split on commas, semicolons and "and". Unknown names are kept separately
    so callers can surface them without treating them as evidence.
    """
    token = _NUMERIC_ID_TOKEN.search(text)
    if token is None:
        raise MalformedResponse("response does not mention numericId")
    digits = re.search(r"\d+", text[token.end():])
    if digits is None:
        raise MalformedResponse("no integer follows the numericId token")
    selected = int(digits.group())

    mentioned: list[str] = []
    unrecognized: list[str] = []
    seen: set[str] = set()
    section = _ATTRIBUTE_SECTION.search(text)
    if section is not None:
        for piece in _MENTION_SPLIT.split(section.group(1)):
            piece = piece.strip().strip("\"'<>()[]{}").strip()
            if not piece:
                continue
            display = recognize_attribute(piece)
            if display is None:
                word = _WORD.search(piece)
                if word is not None:
                    display = recognize_attribute(word.group())
            if display is not None:
                if display.lower() not in seen:
                    seen.add(display.lower())
                    mentioned.append(display)
            else:
                lowered = piece.lower()
                if lowered not in seen:
                    seen.add(lowered)
                    unrecognized.append(piece)
    return MatchDecision(
        selected_numeric_id=selected,
        mentioned_attributes=tuple(mentioned),
        unrecognized_mentions=tuple(unrecognized),
        raw_text=text,
    )


_FENCED_BLOCK = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_STATEMENT_HINTS = ("findElement", "assert", "driver.")


def parse_repair_response(text: str) -> list[str]:
    """Recover repaired statements from a model response.

    Prefers the first fenced code block; otherwise falls back to lines that
    look like test statements. Raises NoRepairFound when neither yields one.
    """
    block = _FENCED_BLOCK.search(text)
    if block is not None:
        statements = [line.strip() for line in block.group(1).splitlines() if line.strip()]
        if statements:
            return statements
    statements = [
        line.strip()
        for line in text.splitlines()
        if any(hint in line for hint in _STATEMENT_HINTS)
    ]
    if not statements:
        raise NoRepairFound("response contains no code block or statement-like line")
    return statements


def aggregate_runs(
    decisions: Sequence[MatchDecision],
    candidate_order: Optional[Sequence[int]] = None,
) -> tuple[MatchDecision, Fraction]:
    """Majority vote over repeated matching runs.

    Returns the earliest decision carrying the modal selected id, plus the
    agreement ratio modal/total. Ties prefer the id listed earliest in
    candidate_order; without an order, the smallest id wins, so the outcome
    never depends on how the decisions happen to be listed.
    """
    if not decisions:
        raise DegenerateInput("cannot aggregate zero decisions")
    counts: dict[int, int] = {}
    for decision in decisions:
        counts[decision.selected_numeric_id] = counts.get(decision.selected_numeric_id, 0) + 1
    modal = max(counts.values())
    tied = [numeric_id for numeric_id, count in counts.items() if count == modal]
    if candidate_order is not None:
        order = {numeric_id: index for index, numeric_id in enumerate(candidate_order)}
        winner = min(tied, key=lambda nid: (order.get(nid, len(order)), nid))
    else:
        winner = min(tied)
    final = next(d for d in decisions if d.selected_numeric_id == winner)
    return final, Fraction(modal, len(decisions))


def prompt_fingerprint(messages: Sequence[ChatMessage]) -> str:
    """Stable hex digest of a prompt, for scripting mock responses."""
    joined = "\x1e".join(f"{m.role}\x1f{m.content}" for m in messages)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def classify_prompt(messages: Sequence[ChatMessage]) -> str:
    """'matching', 'repair', 'self_correction' or 'unknown'."""
    last = messages[-1].content if messages else ""
    if "This is a previous prompt:" in last:
        return "self_correction"
    if "Broken statement:" in last:
        return "repair"
    if "Candidate elements:" in last:
        return "matching"
    return "unknown"


# --- backends --------------------------------------------------------------------------

class ChatBackend(Protocol):
    def send(self, messages: Sequence[ChatMessage], config: RunConfig) -> str: ...


class TransportRecorder:
    """Counts outbound network attempts; lets tests prove offline runs."""

    def __init__(self) -> None:
        self.attempts: list[dict] = []

    def record(self, url: str, payload: dict) -> None:
        self.attempts.append({"url": url, "payload": payload})

    @property
    def count(self) -> int:
        return len(self.attempts)


Transport = Callable[[str, dict, str, float], dict]


def _default_transport(url: str, payload: dict, api_key: str, timeout: float) -> dict:
    try:
        response = requests.post(
            url,
            json=payload,
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
        )
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if response.status_code in (401, 403):
        raise AuthError(f"endpoint rejected credential (HTTP {response.status_code})")
    try:
        body = response.json()
    except ValueError as exc:
        raise TransportError(f"non-JSON response (HTTP {response.status_code})") from exc
    if response.status_code >= 400:
        error = body.get("error", {}) if isinstance(body, dict) else {}
        message = str(error.get("message", "")) if isinstance(error, dict) else ""
        code = str(error.get("code", "")) if isinstance(error, dict) else ""
        if "context_length" in code or "context length" in message.lower():
            raise TokenLimitError(message or "context window exceeded")
        raise TransportError(f"HTTP {response.status_code}: {message or response.text[:200]}")
    return body


class LiveChatBackend:
    """HTTPS chat-completion backend with bearer authentication."""

    def __init__(
        self,
        url: str,
        api_key: str,
        transport: Optional[Transport] = None,
        recorder: Optional[TransportRecorder] = None,
    ) -> None:
        self.url = url
        self.api_key = api_key
        self.transport = transport or _default_transport
        self.recorder = recorder

    def send(self, messages: Sequence[ChatMessage], config: RunConfig) -> str:
        if not self.api_key:
            # Checked before any connection is opened.
            raise AuthError("no API credential configured for the live backend")
        payload = {
            "model": config.model_id,
            "temperature": config.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        if self.recorder is not None:
            self.recorder.record(self.url, payload)
        body = self.transport(self.url, payload, self.api_key, config.request_timeout)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response shape: {body!r}") from exc


_MOCK_ERRORS = {
    "transport": TransportError,
    "auth": AuthError,
    "token_limit": TokenLimitError,
}


class MockChatBackend:
    """Scripted offline backend.

    The script maps prompts to canned responses by fingerprint, by prompt
    kind, or by position in a sequence; a by_breakage section scopes entries
    to one breakage so concurrent batches stay deterministic. Entries are
    either response text or {"error": "transport"|"auth"|"token_limit"}.
    """

    def __init__(
        self,
        script: dict,
        _scope: Optional[dict] = None,
        _parent: Optional["MockChatBackend"] = None,
    ) -> None:
        self.script = script
        self._scope = _scope
        self._scope_position = 0
        self._global_position = 0
        self._lock = threading.Lock()
        # Global sequence state lives on the root backend even for scoped views.
        self._shared = _parent or self

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def for_breakage(self, breakage_id: str) -> "MockChatBackend":
        """Backend view whose scoped entries serve only this breakage."""
        scope = self.script.get("by_breakage", {}).get(breakage_id)
        return MockChatBackend(self.script, _scope=scope, _parent=self._shared)

    def _resolve(self, messages: Sequence[ChatMessage]) -> object:
        kind = classify_prompt(messages)
        if self._scope is not None:
            sequence = self._scope.get("sequence", [])
            if self._scope_position < len(sequence):
                entry = sequence[self._scope_position]
                self._scope_position += 1
                return entry
            by_kind = self._scope.get("by_kind", {})
            if kind in by_kind:
                return by_kind[kind]
        fingerprinted = self.script.get("by_fingerprint", {})
        fingerprint = prompt_fingerprint(messages)
        if fingerprint in fingerprinted:
            return fingerprinted[fingerprint]
        by_kind = self.script.get("by_kind", {})
        if kind in by_kind:
            return by_kind[kind]
        sequence = self.script.get("sequence", [])
        with self._shared._lock:
            if self._shared._global_position < len(sequence):
                entry = sequence[self._shared._global_position]
                self._shared._global_position += 1
                return entry
        raise TransportError(f"mock script has no response for a {kind} prompt")

    def send(self, messages: Sequence[ChatMessage], config: RunConfig) -> str:
        entry = self._resolve(messages)
        if isinstance(entry, str):
            return entry
        if isinstance(entry, dict):
            if "error" in entry:
                raise _MOCK_ERRORS[entry["error"]](f"scripted {entry['error']} failure")
            if "text" in entry:
                return str(entry["text"])
        raise TransportError(f"unusable mock entry: {entry!r}")


def chat_send(
    messages: Sequence[ChatMessage],
    config: RunConfig,
    backend: ChatBackend,
    *,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Send a prompt, retrying transport failures with exponential backoff.

    The first attempt plus up to max_retries re-attempts; authentication and
    token-limit failures are not retried.
    """
    delay = backoff
    for attempt in range(config.max_retries + 1):
        try:
            return backend.send(messages, config)
        except TransportError:
            if attempt == config.max_retries:
                raise
            if delay > 0:
                sleep(delay)
            delay *= 2
    raise AssertionError("unreachable")
