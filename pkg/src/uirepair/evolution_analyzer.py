"""How pages and their tests evolve between releases.

Two inputs, two views:

* element pairings (old element vs its successor) give per-property change
  ratios across page versions;
* unified diffs of test code split into added/deleted/modified chunks, each
  classified into the change types a repair tool must cope with:

    I   element locator changed
    II  event added
    III event deleted
    IV  event modified
    V   assertion changed
    VI  waiting / page-refresh logic changed
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .dom_snapshot import PageSnapshot, WebElementRecord
from .errors import MalformedDiff, MalformedRecord, NoElementsWithProperty

ELEMENT_PROPERTIES = ("id", "text", "xpath", "tag", "class", "structure")

# Properties an element only "possesses" when the value is non-empty.
_VALUE_FIELD = {"id": "id", "text": "text", "tag": "tag_name", "class": "class_name"}


@dataclass(frozen=True)
class ElementPairing:
    old_element: WebElementRecord
    new_element: Optional[WebElementRecord]
    changed_properties: frozenset[str]


def load_pairings(
    path, old_page: PageSnapshot, new_page: PageSnapshot
) -> list[ElementPairing]:
    """Read tab-separated pairing rows: old xpath, new xpath or NONE,
    comma-joined changed properties (may be empty)."""
    pairings = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 3:
            raise MalformedRecord(f"pairing line {line_no}: expected 3 columns")
        old_xpath, new_xpath, changed_raw = columns
        old_element = old_page.find_by_xpath(old_xpath)
        if old_element is None:
            raise MalformedRecord(f"pairing line {line_no}: unknown old xpath {old_xpath!r}")
        new_element = None
        if new_xpath != "NONE":
            new_element = new_page.find_by_xpath(new_xpath)
            if new_element is None:
                raise MalformedRecord(f"pairing line {line_no}: unknown new xpath {new_xpath!r}")
        changed = frozenset(p.strip() for p in changed_raw.split(",") if p.strip())
        unknown = changed - set(ELEMENT_PROPERTIES)
        if unknown:
            raise MalformedRecord(f"pairing line {line_no}: unknown properties {sorted(unknown)}")
        pairings.append(ElementPairing(old_element, new_element, changed))
    return pairings


def change_ratio(pairings: Sequence[ElementPairing], prop: str) -> Fraction:
    """Changed / possessing, over elements that survived into the new page.

    Unpaired elements are excluded entirely. xpath and structure are always
    possessed; other properties require a non-empty old value.
    """
    if prop not in ELEMENT_PROPERTIES:
        raise ValueError(f"unknown property {prop!r}; pick from {ELEMENT_PROPERTIES}")
    field = _VALUE_FIELD.get(prop)
    possessing = 0
    changed = 0
    for pairing in pairings:
        if pairing.new_element is None:
            continue
        if field is not None and not getattr(pairing.old_element, field):
            continue
        possessing += 1
        if prop in pairing.changed_properties:
            changed += 1
    if possessing == 0:
        raise NoElementsWithProperty(f"no paired element possesses {prop!r}")
    return Fraction(changed, possessing)


# --- diff chunking -----------------------------------------------------------------

class ChunkKind(Enum):
    ADDED = "added"
    DELETED = "deleted"
    MODIFIED = "modified"


@dataclass(frozen=True)
class DiffChunk:
    kind: ChunkKind
    # Content lines with diff markers stripped; blank and comment lines are
    # already removed. For MODIFIED chunks this is deleted then added lines.
    lines: tuple[str, ...]
    deleted_lines: tuple[str, ...]
    added_lines: tuple[str, ...]


def _is_comment_or_blank(content: str) -> bool:
    stripped = content.strip()
    return not stripped or stripped.startswith(("//", "/*", "*"))


_FILE_HEADER_PREFIXES = ("diff ", "index ", "--- ", "+++ ", "new file", "deleted file", "similarity ")


def split_diff_chunks(diff_text: str) -> list[DiffChunk]:
    """Split a unified diff into change chunks.

    Blank and comment lines are dropped first. Maximal runs of added lines
    become ADDED chunks and runs of deleted lines DELETED chunks, except
    that a deleted run followed by an added run within the same hunk (with
    only context between) merges into one MODIFIED chunk. Change content
    outside any @@ hunk raises MalformedDiff.
    """
    hunks: list[list[tuple[str, str]]] = []
    current: Optional[list[tuple[str, str]]] = None
    for line in diff_text.splitlines():
        if line.startswith("@@"):
            current = []
            hunks.append(current)
            continue
        if line.startswith(_FILE_HEADER_PREFIXES):
            current = None
            continue
        if line.startswith("\\"):
            continue  # "\ No newline at end of file"
        if not line.strip():
            continue
        marker = line[0]
        if marker not in "+- ":
            if current is None:
                raise MalformedDiff(f"unrecognized line outside a hunk: {line!r}")
            raise MalformedDiff(f"unrecognized diff line: {line!r}")
        if current is None:
            raise MalformedDiff(f"change line before any @@ hunk header: {line!r}")
        content = line[1:]
        if _is_comment_or_blank(content):
            continue
        current.append((marker, content))

    chunks: list[DiffChunk] = []
    for hunk in hunks:
        runs: list[tuple[str, list[str]]] = []
        for marker, content in hunk:
            if runs and runs[-1][0] == marker:
                runs[-1][1].append(content)
            else:
                runs.append((marker, [content]))
        changes = [(marker, lines) for marker, lines in runs if marker != " "]
        index = 0
        while index < len(changes):
            marker, lines = changes[index]
            if marker == "-" and index + 1 < len(changes) and changes[index + 1][0] == "+":
                added = changes[index + 1][1]
                chunks.append(DiffChunk(
                    kind=ChunkKind.MODIFIED,
                    lines=tuple(lines) + tuple(added),
                    deleted_lines=tuple(lines),
                    added_lines=tuple(added),
                ))
                index += 2
            elif marker == "-":
                chunks.append(DiffChunk(
                    ChunkKind.DELETED, tuple(lines), tuple(lines), ()
                ))
                index += 1
            else:
                chunks.append(DiffChunk(
                    ChunkKind.ADDED, tuple(lines), (), tuple(lines)
                ))
                index += 1
    return chunks


# Keywords marking user-event statements.
EVENT_KEYWORDS = ("clear", "sendKeys", "submit", "click", "input")
_WAIT_KEYWORDS = ("sleep", "implicitlyWait", "refresh")

# The locator call proper, so unrelated edits on the same line do not count
# as a locator change.
_LOCATOR_CALL = re.compile(
    r"findElement\s*\(\s*By\s*\.\s*\w+\s*\(\s*\"(?:[^\"\\]|\\.)*\"\s*\)\s*\)"
    r"|@FindBy\s*\([^)]*\)"
)


def _locator_signatures(lines: Sequence[str]) -> list[str]:
    return sorted(
        match.group() for line in lines for match in _LOCATOR_CALL.finditer(line)
    )


def classify_chunk(chunk: DiffChunk) -> frozenset[str]:
    """Change types present in one chunk; a chunk can carry several.

    Locator changes (type I) require a modified chunk whose locator calls
    differ between the deleted and added sides. Event keywords map to types
    II/III/IV by chunk kind; assertions and waiting logic match anywhere.
    """
    types: set[str] = set()
    if chunk.kind is ChunkKind.MODIFIED:
        before = _locator_signatures(chunk.deleted_lines)
        after = _locator_signatures(chunk.added_lines)
        if (before or after) and before != after:
            types.add("I")
    has_event = any(
        keyword in line for line in chunk.lines for keyword in EVENT_KEYWORDS
    )
    if has_event:
        if chunk.kind is ChunkKind.ADDED:
            types.add("II")
        elif chunk.kind is ChunkKind.DELETED:
            types.add("III")
        else:
            types.add("IV")
    if any("assert" in line.lower() for line in chunk.lines):
        types.add("V")
    if any(keyword in line for line in chunk.lines for keyword in _WAIT_KEYWORDS):
        types.add("VI")
    return frozenset(types)


_EVENT_CALL = re.compile(r"\.\s*(click|sendKeys|clear|submit)\s*\(")


def test_complexity(source: str) -> tuple[int, int]:
    """(lines of code, event count) for one test's source.

    LOC counts non-blank non-comment lines; events count invocations of the
    user-event methods on those lines.
    """
    loc = 0
    events = 0
    for line in source.splitlines():
        if _is_comment_or_blank(line):
            continue
        loc += 1
        events += len(_EVENT_CALL.findall(line))
    return loc, events
