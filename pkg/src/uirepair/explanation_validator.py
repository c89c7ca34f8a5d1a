"""Check a selection's explanation against the candidates it came from.

For every attribute the model cites as "most similar", we recompute which
candidates actually are most similar to the target under that attribute. A
citation is consistent when the selected element is among those minimizers.
The consistency score is the consistent fraction of cited attributes; a score
below 1 signals the explanation contradicts the selection somewhere, which is
the trigger for asking the model to reconsider.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from .dom_snapshot import WebElementRecord
from .errors import EmptyExplanation, SelectionNotInCandidates, UnknownAttribute
from .llm_bridge import MatchDecision, recognize_attribute
from .matchers import CandidateRanking, levenshtein

# Attribute groups sharing one similarity rule. Coordinates are compared
# jointly by Euclidean distance, dimensions by rendered area.
_POSITION_GROUP = frozenset({"x", "y", "location", "position"})
_SIZE_GROUP = frozenset({"width", "height", "size"})
_STRING_FIELD = {
    "id": "id",
    "name": "name",
    "class": "class_name",
    "xpath": "xpath",
    "text": "text",
    "tagName": "tag_name",
    "linkText": "link_text",
}

Candidates = Union[CandidateRanking, Sequence[WebElementRecord]]


def _records(candidates: Candidates) -> list[WebElementRecord]:
    if isinstance(candidates, CandidateRanking):
        return [entry.element for entry in candidates.entries]
    return list(candidates)


@dataclass(frozen=True)
class AttributeCheck:
    attribute: str
    consistent: bool
    most_similar_ids: frozenset[int]


@dataclass(frozen=True)
class ConsistencyReport:
    ec: Fraction
    per_attribute: tuple[AttributeCheck, ...]
    inconsistent_attributes: tuple[str, ...]
    mentioned_count: int


def most_similar_set(
    attribute: str, target: WebElementRecord, candidates: Candidates
) -> frozenset[int]:
    """Numeric ids of every candidate most similar to the target under one
    attribute. All tie minimizers are retained; for isLeaf the set holds the
    candidates with the same boolean and may be empty."""
    display = recognize_attribute(attribute)
    if display is None:
        raise UnknownAttribute(f"unknown attribute {attribute!r}")
    records = _records(candidates)
    if display in _POSITION_GROUP:
        # Integer squared distance keeps tie detection exact.
        def metric(record: WebElementRecord) -> int:
            return (record.x - target.x) ** 2 + (record.y - target.y) ** 2
    elif display in _SIZE_GROUP:
        target_area = target.width * target.height

        def metric(record: WebElementRecord) -> int:
            return abs(record.width * record.height - target_area)
    elif display == "isLeaf":
        return frozenset(
            record.numeric_id for record in records if record.is_leaf == target.is_leaf
        )
    else:
        field = _STRING_FIELD[display]
        target_value = getattr(target, field)

        def metric(record: WebElementRecord) -> int:
            return levenshtein(target_value, getattr(record, field))

    if not records:
        return frozenset()
    best = min(metric(record) for record in records)
    return frozenset(record.numeric_id for record in records if metric(record) == best)


def explanation_consistency(
    decision: MatchDecision, target: WebElementRecord, candidates: Candidates
) -> ConsistencyReport:
    """Score how well the cited attributes support the selection.

    ec = (consistent citations) / (citations); exact rational. Raises
    SelectionNotInCandidates when the decision picked an id outside the
    list, and EmptyExplanation when no recognized attribute was cited (the
    score is undefined then, not zero).
    """
    records = _records(candidates)
    ids = {record.numeric_id for record in records}
    if decision.selected_numeric_id not in ids:
        raise SelectionNotInCandidates(
            f"selected numericId {decision.selected_numeric_id} not among candidates"
        )
    if not decision.mentioned_attributes:
        raise EmptyExplanation("decision cites no recognized attributes")
    checks: list[AttributeCheck] = []
    for attribute in decision.mentioned_attributes:
        similar = most_similar_set(attribute, target, records)
        checks.append(AttributeCheck(
            attribute=attribute,
            consistent=decision.selected_numeric_id in similar,
            most_similar_ids=similar,
        ))
    consistent_count = sum(1 for check in checks if check.consistent)
    return ConsistencyReport(
        ec=Fraction(consistent_count, len(checks)),
        per_attribute=tuple(checks),
        inconsistent_attributes=tuple(
            check.attribute for check in checks if not check.consistent
        ),
        mentioned_count=len(checks),
    )


def should_self_correct(
    report: ConsistencyReport, evaluation_correctness: Optional[bool] = None
) -> bool:
    """Whether to ask the model to reconsider.

    In deployment (correctness unknown) any imperfect score triggers a
    retry; in evaluation the retry is reserved for selections already known
    to be wrong.
    """
    if evaluation_correctness is None:
        return report.ec < 1
    return (not evaluation_correctness) and report.ec < 1
