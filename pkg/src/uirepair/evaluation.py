"""Metrics over pipeline outcomes.

Counts are exact rationals wherever the quantity is a ratio of counts, so
tests and reports never hinge on floating-point rounding. Rates whose
denominator is zero are reported as None (undefined), never as 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .errors import DegenerateInput, MalformedRecord, MissingGroundTruth
from .explanation_validator import ConsistencyReport
from .llm_bridge import MatchDecision, mention_class
from .matchers import CandidateRanking, hit_ratio_at_k
from .statement_tools import Verdict


def stability(selected_ids: Sequence[Optional[int]]) -> Fraction:
    """Agreement of repeated selections: modal count / runs.

    All-distinct selections score 0 by definition. A None entry stands for
    a run that produced no usable selection and never matches anything.
    """
    if not selected_ids:
        raise DegenerateInput("stability over zero runs")
    counts: dict[int, int] = {}
    for numeric_id in selected_ids:
        if numeric_id is not None:
            counts[numeric_id] = counts.get(numeric_id, 0) + 1
    modal = max(counts.values(), default=0)
    if modal < 2:
        return Fraction(0)
    return Fraction(modal, len(selected_ids))


@dataclass(frozen=True)
class MentionStats:
    """Attribute-citation statistics over a set of responses."""

    mode: str
    responses: int
    mention_total: int
    valid_total: int
    correct_in_mention: int
    correct_in_valid: int
    mention_rate: Optional[Fraction]       # responses citing >= 1 attribute
    valid_rate: Optional[Fraction]         # responses citing >= 1 in-mode attribute
    correct_rate_total: Optional[Fraction]
    correct_rate_valid: Optional[Fraction]
    mean_mentions_per_response: Optional[Fraction]
    mean_valid_per_response: Optional[Fraction]


_MODES = ("all", "structural", "non-structural")


def mention_valid_correct(
    decisions: Sequence[Optional[MatchDecision]],
    reports: Sequence[Optional[ConsistencyReport]],
    mode: str = "all",
) -> MentionStats:
    """Count cited attributes, how many fall in the mode's attribute set,
    and how many of each are consistent with the selection.

    decisions and reports align one-to-one; a None decision is a response
    that yielded nothing and contributes zero mentions. Consistency bits
    come from the aligned report; mentions without a report count as cited
    but not correct.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if len(decisions) != len(reports):
        raise DegenerateInput("decisions and reports must align one-to-one")
    mention_total = 0
    valid_total = 0
    correct_in_mention = 0
    correct_in_valid = 0
    responses_with_mention = 0
    responses_with_valid = 0
    for decision, report in zip(decisions, reports):
        mentions = decision.mentioned_attributes if decision is not None else ()
        consistent_by_attr = (
            {check.attribute: check.consistent for check in report.per_attribute}
            if report is not None
            else {}
        )
        valid = [
            name for name in mentions
            if mode == "all" or mention_class(name) == mode
        ]
        mention_total += len(mentions)
        valid_total += len(valid)
        correct_in_mention += sum(1 for name in mentions if consistent_by_attr.get(name))
        correct_in_valid += sum(1 for name in valid if consistent_by_attr.get(name))
        if mentions:
            responses_with_mention += 1
        if valid:
            responses_with_valid += 1

    total = len(decisions)

    def rate(numerator: int, denominator: int) -> Optional[Fraction]:
        return Fraction(numerator, denominator) if denominator else None

    return MentionStats(
        mode=mode,
        responses=total,
        mention_total=mention_total,
        valid_total=valid_total,
        correct_in_mention=correct_in_mention,
        correct_in_valid=correct_in_valid,
        mention_rate=rate(responses_with_mention, total),
        valid_rate=rate(responses_with_valid, total),
        correct_rate_total=rate(correct_in_mention, mention_total),
        correct_rate_valid=rate(correct_in_valid, valid_total),
        mean_mentions_per_response=rate(mention_total, total),
        mean_valid_per_response=rate(valid_total, total),
    )


def gt_selected_rate(
    decisions: Sequence[Optional[MatchDecision]],
    rankings: Sequence[CandidateRanking],
    ground_truth: Mapping[str, str],
) -> Fraction:
    """Fraction of decisions that picked the ground-truth element."""
    if not decisions or len(decisions) != len(rankings):
        raise DegenerateInput("decisions and rankings must align one-to-one")
    hits = 0
    for decision, ranking in zip(decisions, rankings):
        if ranking.target_xpath not in ground_truth:
            raise MissingGroundTruth(f"no ground truth for {ranking.target_xpath!r}")
        expected = ground_truth[ranking.target_xpath]
        if decision is None:
            continue
        selected = ranking.find_by_numeric_id(decision.selected_numeric_id)
        if selected is not None and selected.xpath == expected:
            hits += 1
    return Fraction(hits, len(decisions))


def point_biserial(values: Sequence[float], flags: Sequence[bool]) -> float:
    """Point-biserial correlation between a real variable and a dichotomy.

    r = (M1 - M0) / s_n * sqrt(p * q) with the population standard
    deviation; identical to Pearson over a 0/1 coding of the flags.
    """
    n = len(values)
    if n != len(flags):
        raise DegenerateInput("values and flags must align one-to-one")
    if n < 2:
        raise DegenerateInput("need at least two observations")
    ones = [value for value, flag in zip(values, flags) if flag]
    zeros = [value for value, flag in zip(values, flags) if not flag]
    if not ones or not zeros:
        raise DegenerateInput("both outcome classes must be present")
    mean = sum(values) / n
    variance = sum((value - mean) ** 2 for value in values) / n
    if variance == 0.0:
        raise DegenerateInput("values have zero variance")
    m1 = sum(ones) / len(ones)
    m0 = sum(zeros) / len(zeros)
    p = len(ones) / n
    q = len(zeros) / n
    return (m1 - m0) / math.sqrt(variance) * math.sqrt(p * q)


def best_of_runs(
    per_run_outcomes: Sequence[tuple[bool, Optional[Verdict]]],
    mode: str = "best-of",
) -> tuple[bool, bool]:
    """Credit matching and repair across repeated runs.

    Each outcome is (match correct, repair verdict). A repair counts only
    when its run also matched correctly, so repair credit never exceeds
    matching credit. best-of credits any success; majority needs strictly
    more than half the runs.
    """
    if not per_run_outcomes:
        raise DegenerateInput("no runs to credit")
    if mode not in ("best-of", "majority"):
        raise ValueError(f"unknown credit mode {mode!r}")
    n = len(per_run_outcomes)
    match_successes = sum(1 for match, _ in per_run_outcomes if match)
    repair_successes = sum(
        1 for match, verdict in per_run_outcomes if match and verdict is Verdict.CORRECT
    )
    if mode == "best-of":
        return match_successes > 0, repair_successes > 0
    return match_successes * 2 > n, repair_successes * 2 > n


# --- aggregate report ------------------------------------------------------------

@dataclass(frozen=True)
class GroundTruthEntry:
    breakage_id: str
    application: str
    target_xpath: str
    gt_xpath: str


def load_ground_truth(path) -> list[GroundTruthEntry]:
    """Read tab-separated rows: breakageId, application, targetXpath, gtXpath."""
    entries = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 4:
            raise MalformedRecord(f"ground truth line {line_no}: expected 4 columns")
        entries.append(GroundTruthEntry(*columns))
    return entries


@dataclass(frozen=True)
class BreakageArtifact:
    """The evaluation-facing slice of one breakage's outcome."""

    breakage_id: str
    application: str
    ranking: Optional[CandidateRanking]
    decisions: tuple[Optional[MatchDecision], ...]
    reports: tuple[Optional[ConsistencyReport], ...]
    final_decision: Optional[MatchDecision]
    final_ec: Optional[Fraction]
    final_selected_xpath: Optional[str]
    repair_verdict: Optional[Verdict]
    per_run_match_correct: tuple[bool, ...] = ()
    per_run_repair_verdicts: Optional[tuple[Optional[Verdict], ...]] = None


@dataclass(frozen=True)
class ApplicationCount:
    breakages: int
    matching: int
    repair: int


@dataclass(frozen=True)
class MetricsReport:
    credit_mode: str
    attribute_mode: str
    per_application: dict[str, ApplicationCount]
    totals: ApplicationCount
    hr_at_k: dict[int, Optional[float]]
    stability_mean: Optional[Fraction]
    mention_stats: MentionStats
    gt_selected: Optional[Fraction]
    r_pbi: Optional[float]
    breakage_count: int = field(default=0)

    def to_json_dict(self) -> dict:
        def frac(value: Optional[Fraction]):
            return None if value is None else str(value)

        stats = self.mention_stats
        return {
            "credit_mode": self.credit_mode,
            "attribute_mode": self.attribute_mode,
            "breakages": self.breakage_count,
            "per_application": {
                app: {"breakages": c.breakages, "matching": c.matching, "repair": c.repair}
                for app, c in sorted(self.per_application.items())
            },
            "totals": {
                "breakages": self.totals.breakages,
                "matching": self.totals.matching,
                "repair": self.totals.repair,
            },
            "hr_at_k": {str(k): v for k, v in sorted(self.hr_at_k.items())},
            "stability_mean": frac(self.stability_mean),
            "mention": {
                "responses": stats.responses,
                "mention_total": stats.mention_total,
                "valid_total": stats.valid_total,
                "correct_in_mention": stats.correct_in_mention,
                "correct_in_valid": stats.correct_in_valid,
                "mention_rate": frac(stats.mention_rate),
                "valid_rate": frac(stats.valid_rate),
                "correct_rate_total": frac(stats.correct_rate_total),
                "correct_rate_valid": frac(stats.correct_rate_valid),
                "mean_mentions_per_response": frac(stats.mean_mentions_per_response),
                "mean_valid_per_response": frac(stats.mean_valid_per_response),
            },
            "gt_selected_rate": frac(self.gt_selected),
            "r_pbi": self.r_pbi,
        }

    def format_table(self) -> str:
        lines = [
            f"credit mode: {self.credit_mode}    attribute mode: {self.attribute_mode}",
            "",
            f"{'application':<24}{'breakages':>10}{'matching':>10}{'repair':>8}",
        ]
        for app, count in sorted(self.per_application.items()):
            lines.append(f"{app:<24}{count.breakages:>10}{count.matching:>10}{count.repair:>8}")
        lines.append(
            f"{'total':<24}{self.totals.breakages:>10}{self.totals.matching:>10}"
            f"{self.totals.repair:>8}"
        )
        lines.append("")
        hr_cells = "  ".join(
            f"HR@{k}={'n/a' if v is None else f'{v:.3f}'}" for k, v in sorted(self.hr_at_k.items())
        )
        if hr_cells:
            lines.append(hr_cells)

        def show(label: str, value) -> str:
            if value is None:
                return f"{label}: undefined"
            if isinstance(value, Fraction):
                return f"{label}: {value} ({float(value):.3f})"
            return f"{label}: {value:.3f}"

        lines.append(show("stability", self.stability_mean))
        lines.append(show("mention rate", self.mention_stats.mention_rate))
        lines.append(show("valid rate", self.mention_stats.valid_rate))
        lines.append(show("correct rate (mentioned)", self.mention_stats.correct_rate_total))
        lines.append(show("correct rate (valid)", self.mention_stats.correct_rate_valid))
        lines.append(show("ground-truth selected rate", self.gt_selected))
        lines.append(show("point-biserial r", self.r_pbi))
        return "\n".join(lines)


def build_report(
    artifacts: Sequence[BreakageArtifact],
    ground_truth: Sequence[GroundTruthEntry],
    k_grid: Sequence[int] = tuple(range(1, 11)),
    credit_mode: str = "best-of",
    attribute_mode: str = "all",
) -> MetricsReport:
    """Aggregate per-breakage artifacts into one report.

    Matching/repair counts follow best_of_runs over per-run outcomes; when a
    breakage carries only a single final repair verdict, that verdict stands
    in for runs whose match was correct.
    """
    gt_by_breakage = {entry.breakage_id: entry for entry in ground_truth}

    per_app: dict[str, list[int]] = {}
    all_decisions: list[Optional[MatchDecision]] = []
    all_reports: list[Optional[ConsistencyReport]] = []
    stabilities: list[Fraction] = []
    final_decisions: list[Optional[MatchDecision]] = []
    final_rankings: list[CandidateRanking] = []
    hr_rankings: list[CandidateRanking] = []
    hr_ground_truth: dict[str, str] = {}
    ec_values: list[float] = []
    ec_flags: list[bool] = []

    for artifact in artifacts:
        entry = gt_by_breakage.get(artifact.breakage_id)
        counts = per_app.setdefault(artifact.application, [0, 0, 0])
        counts[0] += 1

        if artifact.per_run_match_correct:
            if artifact.per_run_repair_verdicts is not None:
                outcomes = list(zip(artifact.per_run_match_correct, artifact.per_run_repair_verdicts))
            else:
                outcomes = [
                    (match, artifact.repair_verdict if match else None)
                    for match in artifact.per_run_match_correct
                ]
            matched, repaired = best_of_runs(outcomes, credit_mode)
            counts[1] += int(matched)
            counts[2] += int(repaired)

        all_decisions.extend(artifact.decisions)
        all_reports.extend(artifact.reports)
        if artifact.decisions:
            stabilities.append(stability([
                decision.selected_numeric_id if decision is not None else None
                for decision in artifact.decisions
            ]))
        if artifact.ranking is not None and entry is not None:
            hr_rankings.append(artifact.ranking)
            hr_ground_truth[artifact.ranking.target_xpath] = entry.gt_xpath
            final_decisions.append(artifact.final_decision)
            final_rankings.append(artifact.ranking)
        if artifact.final_ec is not None and artifact.per_run_match_correct:
            ec_values.append(float(artifact.final_ec))
            ec_flags.append(any(artifact.per_run_match_correct)
                            if credit_mode == "best-of"
                            else sum(artifact.per_run_match_correct) * 2
                            > len(artifact.per_run_match_correct))

    hr_table: dict[int, Optional[float]] = {}
    for k in k_grid:
        hr_table[k] = (
            hit_ratio_at_k(hr_rankings, hr_ground_truth, k) if hr_rankings else None
        )

    stats = mention_valid_correct(all_decisions, all_reports, attribute_mode)

    gt_rate: Optional[Fraction] = None
    if final_rankings:
        gt_rate = gt_selected_rate(
            final_decisions,
            final_rankings,
            {entry.target_xpath: entry.gt_xpath for entry in ground_truth},
        )

    r_pbi: Optional[float] = None
    if ec_values:
        try:
            r_pbi = point_biserial(ec_values, ec_flags)
        except DegenerateInput:
            r_pbi = None

    stability_mean: Optional[Fraction] = None
    if stabilities:
        stability_mean = sum(stabilities, Fraction(0)) / len(stabilities)

    per_application = {
        app: ApplicationCount(breakages=c[0], matching=c[1], repair=c[2])
        for app, c in per_app.items()
    }
    totals = ApplicationCount(
        breakages=sum(c.breakages for c in per_application.values()),
        matching=sum(c.matching for c in per_application.values()),
        repair=sum(c.repair for c in per_application.values()),
    )
    return MetricsReport(
        credit_mode=credit_mode,
        attribute_mode=attribute_mode,
        per_application=per_application,
        totals=totals,
        hr_at_k=hr_table,
        stability_mean=stability_mean,
        mention_stats=stats,
        gt_selected=gt_rate,
        r_pbi=r_pbi,
        breakage_count=len(artifacts),
    )
