"""Page snapshots: parse HTML into flat element records with stable ids.

Design goals:

* every element node in the document yields exactly one record, numbered
  densely in document (pre-order) order;
* absolute XPaths with 1-based same-tag sibling indexing, so two distinct
  elements can never share a path;
* geometry is optional and comes from a layout sidecar captured at render
  time; without one, coordinates default to 0;
* records serialize to a single-line text form that round-trips exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

from .errors import EmptyDocument, MalformedLayoutRow, MalformedRecord

# Elements that never take content and therefore never get an end tag.
VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

# Block-level tags whose start implicitly ends an open paragraph.
_P_CLOSING_TAGS = {
    "address", "article", "aside", "blockquote", "details", "div", "dl",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3",
    "h4", "h5", "h6", "header", "hgroup", "hr", "main", "menu", "nav", "ol",
    "p", "pre", "section", "table", "ul",
}

# An arriving start tag (key) implicitly closes the open tags in its set.
_IMPLIED_CLOSERS: dict[str, set[str]] = {
    "li": {"li", "p"},
    "tr": {"tr", "td", "th", "p"},
    "td": {"td", "th", "p"},
    "th": {"td", "th", "p"},
    "option": {"option"},
    "dt": {"dt", "dd", "p"},
    "dd": {"dt", "dd", "p"},
}
for _tag in _P_CLOSING_TAGS:
    _IMPLIED_CLOSERS.setdefault(_tag, set()).add("p")
del _tag

# Content of these elements is data, not rendered text.
_NON_TEXT_TAGS = frozenset({"script", "style"})


@dataclass(frozen=True)
class WebElementRecord:
    """One element of a rendered page, flattened to twelve attributes."""

    numeric_id: int
    id: str
    name: str
    class_name: str
    xpath: str
    text: str
    tag_name: str
    link_text: str
    x: int
    y: int
    width: int
    height: int
    is_leaf: bool


@dataclass(frozen=True)
class PageSnapshot:
    """An immutable bag of element records for one page version."""

    label: str
    records: tuple[WebElementRecord, ...]
    source_path: str = ""
    screenshot: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        for position, record in enumerate(self.records):
            if record.numeric_id != position:
                raise MalformedRecord(
                    f"records not densely numbered: position {position} "
                    f"holds numericId {record.numeric_id}"
                )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def element_bounds(self) -> tuple[tuple[int, int, int, int], ...]:
        """Per-element (x, y, width, height) in record order."""
        return tuple((r.x, r.y, r.width, r.height) for r in self.records)

    def find_by_xpath(self, xpath: str) -> Optional[WebElementRecord]:
        for record in self.records:
            if record.xpath == xpath:
                return record
        return None

    def find_by_numeric_id(self, numeric_id: int) -> Optional[WebElementRecord]:
        if 0 <= numeric_id < len(self.records):
            return self.records[numeric_id]
        return None


class DomNode:
    """Mutable element node used while building the tree."""

    __slots__ = ("tag", "attrs", "parent", "children")

    def __init__(self, tag: str, attrs: dict[str, str], parent: Optional["DomNode"]):
        self.tag = tag
        self.attrs = attrs
        self.parent = parent
        # Mixed list: DomNode children interleaved with text pieces (str).
        self.children: list[DomNode | str] = []

    def element_children(self) -> list["DomNode"]:
        return [c for c in self.children if isinstance(c, DomNode)]


class _TreeBuilder(HTMLParser):
    """Lenient tree construction: unmatched end tags are dropped, missing
    end tags close implicitly when an ancestor closes."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.top = DomNode("#document", {}, None)
        self.stack = [self.top]

    def _open(self, tag: str, attrs: list[tuple[str, Optional[str]]], void: bool) -> None:
        closers = _IMPLIED_CLOSERS.get(tag)
        if closers:
            while len(self.stack) > 1 and self.stack[-1].tag in closers:
                self.stack.pop()
        attr_map: dict[str, str] = {}
        for key, value in attrs:
            attr_map.setdefault(key, value if value is not None else "")
        node = DomNode(tag, attr_map, self.stack[-1])
        self.stack[-1].children.append(node)
        if not void and tag not in VOID_TAGS:
            self.stack.append(node)

    def handle_starttag(self, tag: str, attrs) -> None:  # noqa: D102
        self._open(tag, attrs, void=False)

    def handle_startendtag(self, tag: str, attrs) -> None:  # noqa: D102
        self._open(tag, attrs, void=True)

    def handle_endtag(self, tag: str) -> None:  # noqa: D102
        for depth in range(len(self.stack) - 1, 0, -1):
            if self.stack[depth].tag == tag:
                del self.stack[depth:]
                return
        # No matching open tag: ignore.

    def handle_data(self, data: str) -> None:  # noqa: D102
        if data:
            self.stack[-1].children.append(data)

    # Comments, doctypes and processing instructions do not become records
    # and contribute nothing to element text.
    def handle_comment(self, data: str) -> None:  # noqa: D102
        pass

    def handle_decl(self, decl: str) -> None:  # noqa: D102
        pass

    def handle_pi(self, data: str) -> None:  # noqa: D102
        pass


def _find_html_root(top: DomNode) -> Optional[DomNode]:
    for child in top.element_children():
        if child.tag == "html":
            return child
    return None


def _recover_root(top: DomNode) -> DomNode:
    """Wrap rootless fragments in a synthetic <html> (and <body> if needed)."""
    elements = top.element_children()
    if not elements:
        raise EmptyDocument("document contains no element nodes")
    root = DomNode("html", {}, None)
    if any(child.tag in ("head", "body") for child in elements):
        adopted = top.children
    else:
        body = DomNode("body", {}, root)
        body.children = top.children
        for child in body.element_children():
            child.parent = body
        adopted = [body]
    root.children = adopted
    for child in root.element_children():
        child.parent = root
    return root


def normalize_text(raw: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return " ".join(raw.split())


def _subtree_text(node: DomNode) -> str:
    pieces: list[str] = []

    def walk(current: DomNode) -> None:
        if current.tag in _NON_TEXT_TAGS:
            return
        for child in current.children:
            if isinstance(child, str):
                pieces.append(child)
            else:
                walk(child)

    walk(node)
    return normalize_text("".join(pieces))


def compute_xpath(node: DomNode) -> str:
    """Absolute XPath of a DOM node, e.g. /html[1]/body[1]/div[2]/a[1].

    The index counts same-tag element siblings, 1-based, so the path of an
    element is unique within its document.
    """
    steps: list[str] = []
    current: Optional[DomNode] = node
    while current is not None and current.tag != "#document":
        index = 1
        parent = current.parent
        if parent is not None:
            for sibling in parent.element_children():
                if sibling is current:
                    break
                if sibling.tag == current.tag:
                    index += 1
        steps.append(f"{current.tag}[{index}]")
        current = current.parent
    return "/" + "/".join(reversed(steps))


def parse_page(html_text: str, label: str, source_path: str = "") -> PageSnapshot:
    """Parse HTML into a snapshot of element records in document order.

    The parser is lenient: unclosed and unmatched tags are tolerated, and a
    missing <html> root is synthesized around the fragment. Raises
    EmptyDocument when no element node can be recovered at all.
    """
    builder = _TreeBuilder()
    builder.feed(html_text or "")
    builder.close()
    root = _find_html_root(builder.top) or _recover_root(builder.top)

    records: list[WebElementRecord] = []

    def visit(node: DomNode, path: str) -> None:
        text = _subtree_text(node)
        records.append(
            WebElementRecord(
                numeric_id=len(records),
                id=node.attrs.get("id", ""),
                name=node.attrs.get("name", ""),
                class_name=node.attrs.get("class", ""),
                xpath=path,
                text=text,
                tag_name=node.tag,
                link_text=text if node.tag == "a" else "",
                x=0,
                y=0,
                width=0,
                height=0,
                is_leaf=not node.element_children(),
            )
        )
        same_tag_seen: dict[str, int] = {}
        for child in node.element_children():
            index = same_tag_seen.get(child.tag, 0) + 1
            same_tag_seen[child.tag] = index
            visit(child, f"{path}/{child.tag}[{index}]")

    visit(root, "/html[1]")
    return PageSnapshot(label=label, records=tuple(records), source_path=source_path)


# --- record serialization -----------------------------------------------------

_RECORD_FIELDS = (
    "numericId", "id", "name", "class", "xpath", "text", "tagName",
    "linkText", "x", "y", "width", "height", "isLeaf",
)
_STRING_FIELDS = frozenset({"id", "name", "class", "xpath", "text", "tagName", "linkText"})
_INT_FIELDS = frozenset({"numericId", "x", "y", "width", "height"})


def _escape(value: str) -> str:
    return (
        value.replace("\\", "\\\\")
        .replace("'", "\\'")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def _unescape(value: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            nxt = value[i + 1]
            out.append({"n": "\n", "r": "\r"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def serialize_record(record: WebElementRecord) -> str:
    """Single-line text form of a record; see deserialize_record."""
    return (
        "{numericId=%d, id='%s', name='%s', class='%s', xpath='%s', text='%s', "
        "tagName='%s', linkText='%s', x=%d, y=%d, width=%d, height=%d, isLeaf=%s}"
        % (
            record.numeric_id,
            _escape(record.id),
            _escape(record.name),
            _escape(record.class_name),
            _escape(record.xpath),
            _escape(record.text),
            _escape(record.tag_name),
            _escape(record.link_text),
            record.x,
            record.y,
            record.width,
            record.height,
            "true" if record.is_leaf else "false",
        )
    )


def _split_fields(body: str) -> list[str]:
    """Split on ', ' at quote depth zero, honoring backslash escapes."""
    parts: list[str] = []
    buf: list[str] = []
    in_quote = False
    i = 0
    while i < len(body):
        ch = body[i]
        if in_quote:
            buf.append(ch)
            if ch == "\\" and i + 1 < len(body):
                buf.append(body[i + 1])
                i += 1
            elif ch == "'":
                in_quote = False
        elif ch == "'":
            in_quote = True
            buf.append(ch)
        elif ch == "," and body[i : i + 2] == ", ":
            parts.append("".join(buf))
            buf = []
            i += 1
        else:
            buf.append(ch)
        i += 1
    parts.append("".join(buf))
    return parts


def deserialize_record(line: str) -> WebElementRecord:
    """Parse the single-line record form back into a WebElementRecord.

    Raises MalformedRecord on missing fields, unknown fields, bad quoting
    or non-integer geometry.
    """
    stripped = line.strip()
    if not (stripped.startswith("{") and stripped.endswith("}")):
        raise MalformedRecord(f"record must be brace-delimited: {line!r}")
    values: dict[str, str] = {}
    for part in _split_fields(stripped[1:-1]):
        key, eq, raw = part.partition("=")
        if not eq:
            raise MalformedRecord(f"field without '=': {part!r}")
        key = key.strip()
        if key not in _RECORD_FIELDS:
            raise MalformedRecord(f"unknown field {key!r}")
        if key in values:
            raise MalformedRecord(f"duplicate field {key!r}")
        values[key] = raw
    missing = [name for name in _RECORD_FIELDS if name not in values]
    if missing:
        raise MalformedRecord(f"missing fields: {', '.join(missing)}")

    def text_of(key: str) -> str:
        raw = values[key]
        if len(raw) < 2 or raw[0] != "'" or raw[-1] != "'":
            raise MalformedRecord(f"field {key!r} must be single-quoted: {raw!r}")
        return _unescape(raw[1:-1])

    def int_of(key: str) -> int:
        try:
            return int(values[key])
        except ValueError:
            raise MalformedRecord(f"field {key!r} must be an integer: {values[key]!r}")

    leaf_raw = values["isLeaf"]
    if leaf_raw not in ("true", "false"):
        raise MalformedRecord(f"isLeaf must be true or false: {leaf_raw!r}")
    return WebElementRecord(
        numeric_id=int_of("numericId"),
        id=text_of("id"),
        name=text_of("name"),
        class_name=text_of("class"),
        xpath=text_of("xpath"),
        text=text_of("text"),
        tag_name=text_of("tagName"),
        link_text=text_of("linkText"),
        x=int_of("x"),
        y=int_of("y"),
        width=int_of("width"),
        height=int_of("height"),
        is_leaf=leaf_raw == "true",
    )


# --- snapshot files ------------------------------------------------------------

def save_snapshot(snapshot: PageSnapshot, path: str | Path) -> None:
    """Write a snapshot as a header line followed by one record per line."""
    for banned, where in ((("\t", "\n"), snapshot.label), (("\t", "\n"), snapshot.source_path)):
        for ch in banned:
            if ch in where:
                raise MalformedRecord("label and source path must not contain tabs or newlines")
    lines = [f"label={snapshot.label}\tsource={snapshot.source_path}\telements={len(snapshot)}"]
    lines.extend(serialize_record(r) for r in snapshot.records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_snapshot(path: str | Path) -> PageSnapshot:
    """Inverse of save_snapshot. Raises MalformedRecord on any corruption."""
    content = Path(path).read_text(encoding="utf-8")
    lines = content.splitlines()
    if not lines:
        raise MalformedRecord(f"empty snapshot file: {path}")
    header = lines[0].split("\t")
    if (
        len(header) != 3
        or not header[0].startswith("label=")
        or not header[1].startswith("source=")
        or not header[2].startswith("elements=")
    ):
        raise MalformedRecord(f"bad snapshot header: {lines[0]!r}")
    label = header[0][len("label="):]
    source = header[1][len("source="):]
    try:
        count = int(header[2][len("elements="):])
    except ValueError:
        raise MalformedRecord(f"bad element count in header: {lines[0]!r}")
    body = [line for line in lines[1:] if line.strip()]
    if len(body) != count:
        raise MalformedRecord(f"header claims {count} elements, file has {len(body)}")
    records = tuple(deserialize_record(line) for line in body)
    return PageSnapshot(label=label, records=records, source_path=source)


# --- layout sidecar --------------------------------------------------------------

def load_layout(
    snapshot: PageSnapshot, path: str | Path
) -> tuple[PageSnapshot, list[str]]:
    """Apply a tab-separated geometry sidecar (xpath, x, y, width, height).

    Returns the updated snapshot and the xpaths of rows that matched no
    element. Rows for the same xpath apply in file order, so the last wins.
    """
    geometry: dict[str, tuple[int, int, int, int]] = {}
    unmatched: list[str] = []
    known = {record.xpath for record in snapshot.records}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        columns = line.split("\t")
        if len(columns) != 5:
            raise MalformedLayoutRow(f"line {line_no}: expected 5 columns, got {len(columns)}")
        xpath = columns[0]
        try:
            x, y, w, h = (int(value) for value in columns[1:])
        except ValueError:
            raise MalformedLayoutRow(f"line {line_no}: geometry must be integers: {line!r}")
        if xpath in known:
            geometry[xpath] = (x, y, w, h)
        else:
            unmatched.append(xpath)
    updated = tuple(
        replace(record, x=g[0], y=g[1], width=g[2], height=g[3])
        if (g := geometry.get(record.xpath)) is not None
        else record
        for record in snapshot.records
    )
    return replace(snapshot, records=updated), unmatched


# --- screenshots -------------------------------------------------------------------

def load_screenshot(path: str | Path) -> np.ndarray:
    """Load a screenshot (PNG, PGM, ...) as a float64 grayscale matrix in [0, 1]."""
    with Image.open(path) as image:
        gray = image.convert("L")
        return np.asarray(gray, dtype=np.float64) / 255.0


def with_screenshot(snapshot: PageSnapshot, screenshot: np.ndarray) -> PageSnapshot:
    """Copy of the snapshot carrying the given screenshot matrix."""
    return replace(snapshot, screenshot=screenshot)


def records_in_document_order(records: Iterable[WebElementRecord]) -> list[WebElementRecord]:
    return sorted(records, key=lambda record: record.numeric_id)
