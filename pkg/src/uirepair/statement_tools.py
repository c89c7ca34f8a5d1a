"""Parse, repair and judge single-locator web test statements.

The recognized grammar covers the statement shapes that actually occur in
locator-based UI tests:

    driver.findElement(By.name("q")).sendKeys("text");
    driver.findElement(By.xpath("/html[1]/...")).click();
    assertEquals(driver.findElement(By.xpath("...")).getText(), "expected");
    Assert.assertTrue(driver.findElement(By.id("x")).getText().equals("y"));

String literals honor \\" and \\\\ escapes. Anything outside the grammar
(findElements, chained finds, variable receivers) raises UnsupportedSyntax;
judging such repairs is deliberately left to a human.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .dom_snapshot import WebElementRecord
from .errors import UnsupportedSyntax


class LocatorStrategy(Enum):
    XPATH = "xpath"
    ID = "id"
    NAME = "name"
    CLASS_NAME = "className"
    LINK_TEXT = "linkText"
    CSS_SELECTOR = "cssSelector"


ACTION_METHODS = frozenset({"click", "sendKeys", "clear", "submit", "getText"})
ASSERTION_KINDS = frozenset({"assertEquals", "assertTrue", "assertFalse"})

_STRATEGY_BY_NAME = {strategy.value: strategy for strategy in LocatorStrategy}

# Which element attribute a locator value must equal to be verifiably right.
_REFERENCE_FIELD = {
    LocatorStrategy.XPATH: "xpath",
    LocatorStrategy.ID: "id",
    LocatorStrategy.NAME: "name",
    LocatorStrategy.CLASS_NAME: "class_name",
    LocatorStrategy.LINK_TEXT: "link_text",
    # cssSelector has no single reference attribute; it cannot be verified.
}


@dataclass(frozen=True)
class LocatorSpec:
    strategy: LocatorStrategy
    value: str


@dataclass(frozen=True)
class TestStatement:
    raw: str
    locators: tuple[LocatorSpec, ...]
    action_method: Optional[str]
    action_args: tuple[str, ...]
    assertion_kind: Optional[str]
    assertion_expected: Optional[str]
    # Byte offsets of each By.<strategy>("...") span inside raw.
    locator_spans: tuple[tuple[int, int], ...]


class Verdict(Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    NEEDS_MANUAL_REVIEW = "needs-manual-review"


class FixPattern(Enum):
    MODIFY_LOCATOR_VALUE = "modify-locator-value"
    MODIFY_ASSERTION_VALUE = "modify-assertion-value"
    DIFFERENT_ASSERTION_AND_VALUE = "different-assertion-and-value"
    DIFFERENT_LOCATOR_AND_VALUE = "different-locator-and-value"
    MULTI_STATEMENT = "multi-statement"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class RepairAssessment:
    verdict: Verdict
    fix_pattern: FixPattern
    locator_strategy_changed: bool
    locator_value_correct: bool
    non_locator_preserved: bool
    added_statements: int


# --- tokenizer -----------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # ident | string | punct
    value: str
    start: int
    end: int


_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch == '"':
            decoded: list[str] = []
            j = i + 1
            while j < n and source[j] != '"':
                if source[j] == "\\":
                    if j + 1 >= n:
                        raise UnsupportedSyntax("dangling escape in string literal")
                    decoded.append(_ESCAPES.get(source[j + 1], source[j + 1]))
                    j += 2
                else:
                    decoded.append(source[j])
                    j += 1
            if j >= n:
                raise UnsupportedSyntax("unterminated string literal")
            tokens.append(_Token("string", "".join(decoded), i, j + 1))
            i = j + 1
        elif ch.isalpha() or ch in "_$":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] in "_$"):
                j += 1
            tokens.append(_Token("ident", source[i:j], i, j))
            i = j
        else:
            tokens.append(_Token("punct", ch, i, i + 1))
            i += 1
    return tokens


class _Parser:
    def __init__(self, source: str) -> None:
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self, offset: int = 0) -> Optional[_Token]:
        index = self.pos + offset
        return self.tokens[index] if index < len(self.tokens) else None

    def advance(self) -> _Token:
        token = self.peek()
        if token is None:
            raise UnsupportedSyntax(f"unexpected end of statement: {self.source!r}")
        self.pos += 1
        return token

    def expect_punct(self, ch: str) -> _Token:
        token = self.advance()
        if token.kind != "punct" or token.value != ch:
            raise UnsupportedSyntax(f"expected {ch!r} at offset {token.start}: {self.source!r}")
        return token

    def expect_ident(self, name: Optional[str] = None) -> _Token:
        token = self.advance()
        if token.kind != "ident" or (name is not None and token.value != name):
            raise UnsupportedSyntax(
                f"expected identifier {name or ''!r} at offset {token.start}: {self.source!r}"
            )
        return token

    # find_expr := driver.findElement(By.<strategy>("value"))
    def parse_find(self) -> tuple[LocatorSpec, tuple[int, int]]:
        self.expect_ident("driver")
        self.expect_punct(".")
        method = self.expect_ident()
        if method.value != "findElement":
            raise UnsupportedSyntax(f"unsupported lookup {method.value!r}")
        self.expect_punct("(")
        by = self.expect_ident("By")
        self.expect_punct(".")
        strategy_token = self.expect_ident()
        strategy = _STRATEGY_BY_NAME.get(strategy_token.value)
        if strategy is None:
            raise UnsupportedSyntax(f"unknown locator strategy {strategy_token.value!r}")
        self.expect_punct("(")
        literal = self.advance()
        if literal.kind != "string":
            raise UnsupportedSyntax("locator value must be a string literal")
        closing = self.expect_punct(")")
        self.expect_punct(")")
        return LocatorSpec(strategy, literal.value), (by.start, closing.end)

    def parse_action(self) -> tuple[Optional[str], tuple[str, ...]]:
        """Zero or one trailing action-method call with string-literal args."""
        token = self.peek()
        if token is None or token.kind != "punct" or token.value != ".":
            return None, ()
        self.advance()
        method = self.expect_ident()
        if method.value == "findElement":
            raise UnsupportedSyntax("chained findElement calls are not supported")
        if method.value not in ACTION_METHODS:
            raise UnsupportedSyntax(f"unsupported method {method.value!r}")
        self.expect_punct("(")
        args: list[str] = []
        token = self.peek()
        if token is not None and not (token.kind == "punct" and token.value == ")"):
            while True:
                arg = self.advance()
                if arg.kind != "string":
                    raise UnsupportedSyntax("action arguments must be string literals")
                args.append(arg.value)
                token = self.peek()
                if token is not None and token.kind == "punct" and token.value == ",":
                    self.advance()
                    continue
                break
        self.expect_punct(")")
        following = self.peek()
        if following is not None and following.kind == "punct" and following.value == ".":
            raise UnsupportedSyntax("at most one action method per statement")
        return method.value, tuple(args)

    def finish(self) -> None:
        token = self.peek()
        if token is not None and token.kind == "punct" and token.value == ";":
            self.advance()
            token = self.peek()
        if token is not None:
            raise UnsupportedSyntax(f"trailing content at offset {token.start}: {self.source!r}")


def parse_statement(source: str) -> TestStatement:
    """Parse one statement of the supported grammar.

    Raises UnsupportedSyntax for anything outside it.
    """
    parser = _Parser(source)
    first = parser.peek()
    if first is None:
        raise UnsupportedSyntax("empty statement")

    assertion_kind: Optional[str] = None
    if first.kind == "ident" and first.value == "Assert":
        dot = parser.peek(1)
        if dot is None or dot.kind != "punct" or dot.value != ".":
            raise UnsupportedSyntax("expected '.' after Assert")
        parser.advance()
        parser.advance()
        first = parser.peek()
        if first is None or first.kind != "ident" or first.value not in ASSERTION_KINDS:
            raise UnsupportedSyntax("expected an assertion after Assert.")

    if first.kind == "ident" and first.value in ASSERTION_KINDS:
        assertion_kind = parser.advance().value
        parser.expect_punct("(")
        if assertion_kind == "assertEquals":
            statement = _parse_assert_equals(parser, assertion_kind)
        else:
            statement = _parse_assert_boolean(parser, assertion_kind)
        parser.finish()
        return statement

    if first.kind == "ident" and first.value == "driver":
        locator, span = parser.parse_find()
        method, args = parser.parse_action()
        parser.finish()
        return TestStatement(
            raw=parser.source,
            locators=(locator,),
            action_method=method,
            action_args=args,
            assertion_kind=None,
            assertion_expected=None,
            locator_spans=(span,),
        )

    raise UnsupportedSyntax(f"unrecognized statement start: {parser.source!r}")


def _parse_assert_equals(parser: _Parser, kind: str) -> TestStatement:
    sides = [_parse_equals_side(parser)]
    parser.expect_punct(",")
    sides.append(_parse_equals_side(parser))
    parser.expect_punct(")")

    finds = [side for side in sides if side[0] is not None]
    literals = [side[3] for side in sides if side[0] is None]
    if len(finds) > 1:
        raise UnsupportedSyntax("assertEquals over two element lookups is not supported")
    if finds:
        locator, span, method, _ = finds[0]
        expected = literals[0] if literals else None
        return TestStatement(
            raw=parser.source,
            locators=(locator,),
            action_method=method,
            action_args=(),
            assertion_kind=kind,
            assertion_expected=expected,
            locator_spans=(span,),
        )
    return TestStatement(
        raw=parser.source,
        locators=(),
        action_method=None,
        action_args=(),
        assertion_kind=kind,
        assertion_expected=literals[0] if literals else None,
        locator_spans=(),
    )


def _parse_equals_side(parser: _Parser):
    """One assertEquals argument: string literal or find chain.

    Returns (locator, span, method, literal); locator is None for literals.
    """
    token = parser.peek()
    if token is None:
        raise UnsupportedSyntax("missing assertEquals argument")
    if token.kind == "string":
        parser.advance()
        return None, None, None, token.value
    locator, span = parser.parse_find()
    method, args = parser.parse_action()
    if args:
        raise UnsupportedSyntax("assertion side must not pass arguments")
    return locator, span, method, None


def _parse_assert_boolean(parser: _Parser, kind: str) -> TestStatement:
    locator, span = parser.parse_find()
    # chain: .getText().equals("expected") — the value method then equals.
    parser.expect_punct(".")
    method = parser.expect_ident()
    if method.value not in ACTION_METHODS:
        raise UnsupportedSyntax(f"unsupported method {method.value!r} in assertion")
    parser.expect_punct("(")
    parser.expect_punct(")")
    parser.expect_punct(".")
    parser.expect_ident("equals")
    parser.expect_punct("(")
    literal = parser.advance()
    if literal.kind != "string":
        raise UnsupportedSyntax("equals() argument must be a string literal")
    parser.expect_punct(")")
    parser.expect_punct(")")
    return TestStatement(
        raw=parser.source,
        locators=(locator,),
        action_method=method.value,
        action_args=(),
        assertion_kind=kind,
        assertion_expected=literal.value,
        locator_spans=(span,),
    )


# --- repair generation ------------------------------------------------------------

def _encode_literal(value: str) -> str:
    return value.replace("\\", "\\\\").replace('"', '\\"')


def generate_repair(statement: TestStatement, element: WebElementRecord) -> str:
    """Swap the first locator for By.xpath(<element's xpath>).

    Every byte outside the replaced locator span is preserved.
    """
    if not statement.locators:
        raise UnsupportedSyntax("statement has no locator to repair")
    if not element.xpath:
        raise UnsupportedSyntax("replacement element has an empty xpath")
    start, end = statement.locator_spans[0]
    replacement = f'By.xpath("{_encode_literal(element.xpath)}")'
    return statement.raw[:start] + replacement + statement.raw[end:]


# --- assessment ----------------------------------------------------------------------

def _locator_value_matches(locator: LocatorSpec, reference: WebElementRecord) -> Optional[bool]:
    """True/False when verifiable against the reference, None for cssSelector."""
    field = _REFERENCE_FIELD.get(locator.strategy)
    if field is None:
        return None
    return locator.value == getattr(reference, field)


_EQUIVALENT_ASSERTS = {("assertEquals", "assertTrue"), ("assertTrue", "assertEquals")}


def classify_fix_pattern(
    original: TestStatement, repaired: Sequence[TestStatement]
) -> FixPattern:
    """Name the shape of a fix. Total on parseable statements."""
    if len(repaired) > 1:
        return FixPattern.MULTI_STATEMENT
    if not repaired:
        return FixPattern.UNCLASSIFIED
    fixed = repaired[0]

    strategy_before = original.locators[0].strategy if original.locators else None
    strategy_after = fixed.locators[0].strategy if fixed.locators else None
    value_before = original.locators[0].value if original.locators else None
    value_after = fixed.locators[0].value if fixed.locators else None

    rest_unchanged = (
        original.action_method == fixed.action_method
        and original.action_args == fixed.action_args
        and original.assertion_kind == fixed.assertion_kind
        and original.assertion_expected == fixed.assertion_expected
    )
    if strategy_before is not None and strategy_before == strategy_after and rest_unchanged:
        # Includes the degenerate no-op where nothing differs at all.
        return FixPattern.MODIFY_LOCATOR_VALUE
    if (
        original.assertion_kind is not None
        and original.assertion_kind == fixed.assertion_kind
        and strategy_before == strategy_after
        and (
            original.assertion_expected != fixed.assertion_expected
            or value_before != value_after
        )
    ):
        return FixPattern.MODIFY_ASSERTION_VALUE
    if original.assertion_kind != fixed.assertion_kind:
        return FixPattern.DIFFERENT_ASSERTION_AND_VALUE
    if strategy_before != strategy_after:
        return FixPattern.DIFFERENT_LOCATOR_AND_VALUE
    return FixPattern.UNCLASSIFIED


def assess_repair(
    original: str, repaired: Sequence[str], reference: WebElementRecord
) -> RepairAssessment:
    """Judge repaired statements against the ground-truth element.

    CORRECT requires a verifiably right locator value and preserved
    non-locator intent. Definitive violations are INCORRECT; everything the
    checker cannot verify (multiple statements, unparseable output,
    cssSelector values, assertion rewrites beyond the
    assertEquals/assertTrue-equals pair) goes to manual review.
    """
    original_parsed = parse_statement(original)
    statements = [s for s in repaired if s.strip()]
    added = max(0, len(statements) - 1)

    parsed: list[Optional[TestStatement]] = []
    for statement in statements:
        try:
            parsed.append(parse_statement(statement))
        except UnsupportedSyntax:
            parsed.append(None)

    def first_locator_check() -> bool:
        for candidate in parsed:
            if candidate is not None and candidate.locators:
                return _locator_value_matches(candidate.locators[0], reference) is True
        return False

    if not statements:
        return RepairAssessment(
            verdict=Verdict.NEEDS_MANUAL_REVIEW,
            fix_pattern=FixPattern.UNCLASSIFIED,
            locator_strategy_changed=False,
            locator_value_correct=False,
            non_locator_preserved=False,
            added_statements=0,
        )
    if len(statements) > 1:
        return RepairAssessment(
            verdict=Verdict.NEEDS_MANUAL_REVIEW,
            fix_pattern=FixPattern.MULTI_STATEMENT,
            locator_strategy_changed=True,
            locator_value_correct=first_locator_check(),
            non_locator_preserved=False,
            added_statements=added,
        )

    fixed = parsed[0]
    if fixed is None:
        # UnparseableRepair: outside the grammar, a human has to look.
        return RepairAssessment(
            verdict=Verdict.NEEDS_MANUAL_REVIEW,
            fix_pattern=FixPattern.UNCLASSIFIED,
            locator_strategy_changed=False,
            locator_value_correct=False,
            non_locator_preserved=False,
            added_statements=0,
        )

    pattern = classify_fix_pattern(original_parsed, [fixed])

    strategy_before = original_parsed.locators[0].strategy if original_parsed.locators else None
    strategy_after = fixed.locators[0].strategy if fixed.locators else None
    strategy_changed = strategy_before != strategy_after

    needs_review = False
    if fixed.locators:
        verified = _locator_value_matches(fixed.locators[0], reference)
        if verified is None:
            needs_review = True  # cssSelector: not verifiable
            locator_value_correct = False
        else:
            locator_value_correct = verified
    else:
        locator_value_correct = False
        if original_parsed.locators:
            needs_review = True  # repair dropped the element lookup entirely

    action_preserved = (
        original_parsed.action_method == fixed.action_method
        and original_parsed.action_args == fixed.action_args
    )

    kind_before = original_parsed.assertion_kind
    kind_after = fixed.assertion_kind
    if kind_before == kind_after:
        assertion_kind_ok = True
    elif (kind_before, kind_after) in _EQUIVALENT_ASSERTS:
        assertion_kind_ok = True  # the one rewrite treated as meaning-preserving
    else:
        assertion_kind_ok = False
        needs_review = True

    if kind_before is None and kind_after is None:
        assertion_value_ok = True
    elif assertion_kind_ok and kind_after is not None:
        if fixed.assertion_expected == original_parsed.assertion_expected:
            assertion_value_ok = True
        elif fixed.assertion_expected == reference.text:
            # Updating an outdated expected value to the element's current
            # text is part of the repair, not a deviation.
            assertion_value_ok = True
        else:
            assertion_value_ok = False
    else:
        assertion_value_ok = False

    non_locator_preserved = action_preserved and assertion_kind_ok and assertion_value_ok

    if needs_review:
        verdict = Verdict.NEEDS_MANUAL_REVIEW
    elif locator_value_correct and non_locator_preserved:
        verdict = Verdict.CORRECT
    else:
        verdict = Verdict.INCORRECT
    return RepairAssessment(
        verdict=verdict,
        fix_pattern=pattern,
        locator_strategy_changed=strategy_changed,
        locator_value_correct=locator_value_correct,
        non_locator_preserved=non_locator_preserved,
        added_statements=added,
    )
