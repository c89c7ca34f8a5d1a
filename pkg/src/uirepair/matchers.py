"""Candidate ranking: propose which new-page elements replace a target.

Three interchangeable algorithms produce a CandidateRanking:

* EDIT_DISTANCE ranks by Levenshtein distance between absolute XPaths;
* WATER combines exact attribute hits with a weighted XPath/text/position
  similarity among same-tag elements;
* VISTA locates the target's screenshot patch in the new screenshot by
  zero-normalized cross-correlation and ranks elements around the peak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dom_snapshot import PageSnapshot, WebElementRecord
from .errors import (
    DegenerateInput,
    DegenerateTargetRect,
    EmptyPage,
    MissingGroundTruth,
    MissingScreenshot,
    TemplateLargerThanImage,
    ZeroVarianceTemplate,
)

DEFAULT_K = 10


class MatcherAlgorithm(Enum):
    EDIT_DISTANCE = "edit-distance"
    WATER = "water"
    VISTA = "vista"


@dataclass(frozen=True)
class RankEntry:
    element: WebElementRecord
    score: float
    # Set by WATER stage 1: which attribute matched exactly.
    matched_attribute: Optional[str] = None


@dataclass(frozen=True)
class CandidateRanking:
    algorithm: MatcherAlgorithm
    target_xpath: str
    k: int
    entries: tuple[RankEntry, ...]

    def numeric_ids(self) -> list[int]:
        return [entry.element.numeric_id for entry in self.entries]

    def find_by_numeric_id(self, numeric_id: int) -> Optional[WebElementRecord]:
        for entry in self.entries:
            if entry.element.numeric_id == numeric_id:
                return entry.element
        return None


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, 1):
        current = [i]
        for j, ch_b in enumerate(b, 1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ch_a != ch_b),
            ))
        previous = current
    return previous[-1]


def string_similarity(a: str, b: str) -> float:
    """Normalized similarity 1 - lev/max(len); two empty strings count as 1."""
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def _require_elements(page: PageSnapshot) -> None:
    if not page.records:
        raise EmptyPage(f"page {page.label!r} has no elements")


def rank_by_xpath_edit_distance(
    target: WebElementRecord, page: PageSnapshot, k: int = DEFAULT_K
) -> CandidateRanking:
    """Ascending Levenshtein distance on xpaths; ties resolve by numericId."""
    _require_elements(page)
    scored = sorted(
        ((levenshtein(target.xpath, record.xpath), record) for record in page.records),
        key=lambda pair: (pair[0], pair[1].numeric_id),
    )
    entries = tuple(RankEntry(record, float(distance)) for distance, record in scored[:k])
    return CandidateRanking(MatcherAlgorithm.EDIT_DISTANCE, target.xpath, k, entries)


# Attribute priority for exact-match promotion: lower value wins.
_WATER_PRIORITY = (
    ("id", 1),
    ("xpath", 2),
    ("class_name", 3),
    ("link_text", 4),
    ("name", 5),
)
_WATER_ATTRIBUTE_LABEL = {
    "id": "id",
    "xpath": "xpath",
    "class_name": "class",
    "link_text": "linkText",
    "name": "name",
}


def water_rank(
    target: WebElementRecord, page: PageSnapshot, k: int = DEFAULT_K
) -> CandidateRanking:
    """Two-stage ranking.

    Stage 1 promotes elements sharing a non-empty exact attribute value with
    the target, ordered by attribute priority (id, xpath, class, linkText,
    name) then document order. Stage 2 scores the remaining same-tag elements
    by 0.9 * sim(xpath) + 0.1 * secondary, where secondary averages text-hash
    equality, position proximity and sim(text). Stage-1 scores are placed
    above 1 so both stages sort on one descending key.
    """
    _require_elements(page)
    stage1: list[RankEntry] = []
    promoted: set[int] = set()
    for record in page.records:
        best_priority = None
        best_field = None
        for field_name, priority in _WATER_PRIORITY:
            value = getattr(target, field_name)
            if value and getattr(record, field_name) == value:
                best_priority = priority
                best_field = field_name
                break
        if best_priority is not None:
            stage1.append(RankEntry(
                record,
                1.0 + (6 - best_priority) * 0.2,
                matched_attribute=_WATER_ATTRIBUTE_LABEL[best_field],
            ))
            promoted.add(record.numeric_id)
    stage1.sort(key=lambda entry: (-entry.score, entry.element.numeric_id))

    stage2: list[RankEntry] = []
    for record in page.records:
        if record.numeric_id in promoted or record.tag_name != target.tag_name:
            continue
        proximity = 1.0 / (1.0 + math.hypot(record.x - target.x, record.y - target.y))
        hash_equal = 1.0 if record.text == target.text else 0.0
        secondary = (hash_equal + proximity + string_similarity(target.text, record.text)) / 3.0
        score = 0.9 * string_similarity(target.xpath, record.xpath) + 0.1 * secondary
        stage2.append(RankEntry(record, score))
    stage2.sort(key=lambda entry: (-entry.score, entry.element.numeric_id))

    entries = tuple((stage1 + stage2)[:k])
    return CandidateRanking(MatcherAlgorithm.WATER, target.xpath, k, entries)


@dataclass(frozen=True)
class NccMatch:
    peak_row: int
    peak_col: int
    peak_score: float
    score_map: np.ndarray


def ncc_match(template: np.ndarray, image: np.ndarray) -> NccMatch:
    """Zero-normalized cross-correlation of a template over an image.

    score_map[r, c] correlates the template with the image window whose
    top-left corner is (r, c); values lie in [-1, 1]. Windows with zero
    variance score 0 by convention, since the correlation is undefined
    there. The peak is the first maximum in row-major order.
    """
    template = np.asarray(template, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    th, tw = template.shape
    ih, iw = image.shape
    if th > ih or tw > iw:
        raise TemplateLargerThanImage(
            f"template {th}x{tw} does not fit in image {ih}x{iw}"
        )
    centered = template - template.mean()
    template_ss = float((centered ** 2).sum())
    if template_ss == 0.0:
        raise ZeroVarianceTemplate("template has constant intensity")

    windows = sliding_window_view(image, (th, tw))
    numerator = np.einsum("ijkl,kl->ij", windows, centered)

    # Window sums via integral images; avoids materializing every window.
    area = th * tw
    pad = np.zeros((ih + 1, iw + 1))
    pad[1:, 1:] = np.cumsum(np.cumsum(image, axis=0), axis=1)
    win_sum = pad[th:, tw:] - pad[:-th, tw:] - pad[th:, :-tw] + pad[:-th, :-tw]
    pad[1:, 1:] = np.cumsum(np.cumsum(image ** 2, axis=0), axis=1)
    win_sq = pad[th:, tw:] - pad[:-th, tw:] - pad[th:, :-tw] + pad[:-th, :-tw]
    win_ss = np.maximum(win_sq - win_sum ** 2 / area, 0.0)

    denominator = np.sqrt(win_ss * template_ss)
    with np.errstate(invalid="ignore", divide="ignore"):
        score_map = np.where(denominator > 0.0, numerator / denominator, 0.0)
    score_map = np.clip(score_map, -1.0, 1.0)

    flat_peak = int(np.argmax(score_map))
    peak_row, peak_col = divmod(flat_peak, score_map.shape[1])
    return NccMatch(peak_row, peak_col, float(score_map[peak_row, peak_col]), score_map)


def vista_rank(
    target: WebElementRecord,
    old_page: PageSnapshot,
    new_page: PageSnapshot,
    k: int = DEFAULT_K,
) -> CandidateRanking:
    """Template-match the target's screenshot patch, then rank elements.

    Elements whose rectangle contains the correlation peak score the peak
    value; the rest score the negative distance from their center to the
    peak, so a single descending sort orders both groups.
    """
    _require_elements(new_page)
    if old_page.screenshot is None:
        raise MissingScreenshot(f"snapshot {old_page.label!r} has no screenshot")
    if new_page.screenshot is None:
        raise MissingScreenshot(f"snapshot {new_page.label!r} has no screenshot")
    x, y, w, h = target.x, target.y, target.width, target.height
    if w <= 0 or h <= 0:
        raise DegenerateTargetRect(f"target rect {w}x{h} at ({x}, {y}) is empty")
    rows, cols = old_page.screenshot.shape
    if x < 0 or y < 0 or x + w > cols or y + h > rows:
        raise DegenerateTargetRect(
            f"target rect {w}x{h} at ({x}, {y}) leaves the {rows}x{cols} screenshot"
        )
    template = old_page.screenshot[y : y + h, x : x + w]
    match = ncc_match(template, new_page.screenshot)
    peak_x, peak_y = match.peak_col, match.peak_row

    entries = []
    for record in new_page.records:
        contains = (
            record.width > 0
            and record.height > 0
            and record.x <= peak_x < record.x + record.width
            and record.y <= peak_y < record.y + record.height
        )
        if contains:
            score = match.peak_score
        else:
            center_x = record.x + record.width / 2.0
            center_y = record.y + record.height / 2.0
            score = -math.hypot(center_x - peak_x, center_y - peak_y)
        entries.append(RankEntry(record, score))
    entries.sort(key=lambda entry: (-entry.score, entry.element.numeric_id))
    return CandidateRanking(MatcherAlgorithm.VISTA, target.xpath, k, tuple(entries[:k]))


def hit_ratio_at_k(
    rankings: Sequence[CandidateRanking], ground_truth: Mapping[str, str], k: int
) -> float:
    """Fraction of rankings whose first min(k, n) entries contain the
    ground-truth element, matched by xpath."""
    if not rankings:
        raise DegenerateInput("hit ratio over zero rankings")
    hits = 0
    for ranking in rankings:
        if ranking.target_xpath not in ground_truth:
            raise MissingGroundTruth(f"no ground truth for {ranking.target_xpath!r}")
        expected = ground_truth[ranking.target_xpath]
        front = ranking.entries[: max(k, 0)]
        if any(entry.element.xpath == expected for entry in front):
            hits += 1
    return hits / len(rankings)


def format_ranking_lines(ranking: CandidateRanking) -> list[str]:
    """Tab-separated report rows: algorithm, target xpath, rank, id, score."""
    lines = []
    for position, entry in enumerate(ranking.entries, 1):
        score = entry.score
        rendered = str(int(score)) if float(score).is_integer() else f"{score:.6f}"
        lines.append(
            f"{ranking.algorithm.name}\t{ranking.target_xpath}\t{position}"
            f"\t{entry.element.numeric_id}\t{rendered}"
        )
    return lines
