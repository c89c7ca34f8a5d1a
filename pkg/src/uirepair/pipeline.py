"""End-to-end repair runs: rank, match, validate, self-correct, repair.

One breakage flows through:

1. resolve the target element in the old page;
2. rank replacement candidates in the new page;
3. ask the model to pick a candidate, several runs, majority vote;
4. check the explanation against the candidates (consistency score);
5. repair the broken statement from the selected element;
6. when the explanation contradicts the selection (and, with ground truth,
   the selection is known wrong), replay the exchange once and re-repair.

Failures at any stage are captured on the outcome; a batch never aborts
because one breakage misbehaves.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from .dom_snapshot import (
    PageSnapshot,
    WebElementRecord,
    load_layout,
    load_screenshot,
    load_snapshot,
    with_screenshot,
)
from .errors import (
    AuthError,
    EmptyExplanation,
    MalformedRecord,
    MalformedResponse,
    MissingGroundTruth,
    NoInconsistency,
    NoRepairFound,
    SelectionNotInCandidates,
    TokenLimitError,
    TransportError,
    UIRepairError,
    UnsupportedSyntax,
)
from .evaluation import BreakageArtifact, GroundTruthEntry, MetricsReport, build_report
from .explanation_validator import (
    ConsistencyReport,
    explanation_consistency,
    should_self_correct,
)
from .llm_bridge import (
    ChatBackend,
    ChatMessage,
    MatchDecision,
    MockChatBackend,
    RunConfig,
    aggregate_runs,
    build_matching_prompt,
    build_repair_prompt,
    build_self_correction_prompt,
    chat_send,
    parse_match_response,
    parse_repair_response,
)
from .matchers import (
    CandidateRanking,
    MatcherAlgorithm,
    RankEntry,
    rank_by_xpath_edit_distance,
    vista_rank,
    water_rank,
)
from .statement_tools import RepairAssessment, Verdict, assess_repair

DEFAULT_K = 10


@dataclass(frozen=True)
class BreakageCase:
    """One broken statement plus the page versions around it."""

    breakage_id: str
    application: str
    old_page: PageSnapshot
    new_page: PageSnapshot
    broken_statement: str
    target_xpath: str
    matcher: MatcherAlgorithm = MatcherAlgorithm.EDIT_DISTANCE
    gt_xpath: Optional[str] = None
    k: int = DEFAULT_K


@dataclass(frozen=True)
class ChatExchange:
    kind: str  # matching | repair | self_correction
    prompt: tuple[ChatMessage, ...]
    response: str


@dataclass(frozen=True)
class StageError:
    stage: str
    error_type: str
    message: str


@dataclass(frozen=True)
class BreakageOutcome:
    breakage_id: str
    application: str
    target_xpath: str
    gt_xpath: Optional[str]
    matcher: MatcherAlgorithm
    ranking: Optional[CandidateRanking] = None
    run_responses: tuple[str, ...] = ()
    run_decisions: tuple[Optional[MatchDecision], ...] = ()
    run_reports: tuple[Optional[ConsistencyReport], ...] = ()
    final_decision: Optional[MatchDecision] = None
    agreement: Optional[Fraction] = None
    consistency_report: Optional[ConsistencyReport] = None
    self_corrected: bool = False
    post_run_responses: tuple[str, ...] = ()
    post_run_decisions: tuple[Optional[MatchDecision], ...] = ()
    post_decision: Optional[MatchDecision] = None
    post_agreement: Optional[Fraction] = None
    post_report: Optional[ConsistencyReport] = None
    pre_correction_statements: tuple[str, ...] = ()
    pre_correction_assessment: Optional[RepairAssessment] = None
    repaired_statements: tuple[str, ...] = ()
    assessment: Optional[RepairAssessment] = None
    exchanges: tuple[ChatExchange, ...] = ()
    errors: tuple[StageError, ...] = ()
    timings: dict[str, float] = field(default_factory=dict, compare=False)

    def effective_decision(self) -> Optional[MatchDecision]:
        if self.self_corrected and self.post_decision is not None:
            return self.post_decision
        return self.final_decision

    def effective_report(self) -> Optional[ConsistencyReport]:
        if self.self_corrected and self.post_decision is not None:
            return self.post_report
        return self.consistency_report


@dataclass(frozen=True)
class BatchResult:
    outcomes: tuple[BreakageOutcome, ...]
    report: Optional[MetricsReport]


def _rank(case: BreakageCase, target: WebElementRecord) -> CandidateRanking:
    if case.matcher is MatcherAlgorithm.EDIT_DISTANCE:
        return rank_by_xpath_edit_distance(target, case.new_page, case.k)
    if case.matcher is MatcherAlgorithm.WATER:
        return water_rank(target, case.new_page, case.k)
    return vista_rank(target, case.old_page, case.new_page, case.k)


def run_breakage(
    case: BreakageCase,
    backend: ChatBackend,
    config: RunConfig,
    *,
    self_correct: bool = True,
    backoff: float = 0.0,
    sleep: Callable[[float], None] = time.sleep,
) -> BreakageOutcome:
    """Run one breakage through the whole flow, capturing stage failures.

    Issues at most runs_per_breakage matching calls, the same again when a
    self-correction round triggers, and at most two repair calls.
    """
    errors: list[StageError] = []
    exchanges: list[ChatExchange] = []
    timings: dict[str, float] = {}

    def capture(stage: str, exc: BaseException) -> None:
        errors.append(StageError(stage, type(exc).__name__, str(exc)))

    def finish(**kwargs) -> BreakageOutcome:
        return BreakageOutcome(
            breakage_id=case.breakage_id,
            application=case.application,
            target_xpath=case.target_xpath,
            gt_xpath=case.gt_xpath,
            matcher=case.matcher,
            exchanges=tuple(exchanges),
            errors=tuple(errors),
            timings=timings,
            **kwargs,
        )

    target = case.old_page.find_by_xpath(case.target_xpath)
    if target is None:
        errors.append(StageError(
            "resolve-target", "TargetNotFound",
            f"no element at {case.target_xpath!r} in the old page",
        ))
        return finish()

    started = time.perf_counter()
    try:
        ranking = _rank(case, target)
    except UIRepairError as exc:
        capture("rank", exc)
        return finish()
    timings["rank"] = time.perf_counter() - started

    def matching_round(prompt: Sequence[ChatMessage], kind: str):
        responses: list[str] = []
        decisions: list[Optional[MatchDecision]] = []
        reports: list[Optional[ConsistencyReport]] = []
        for run_index in range(config.runs_per_breakage):
            try:
                response = chat_send(prompt, config, backend, backoff=backoff, sleep=sleep)
            except (TransportError, AuthError, TokenLimitError) as exc:
                capture(f"{kind}[{run_index}]", exc)
                responses.append("")
                decisions.append(None)
                reports.append(None)
                continue
            exchanges.append(ChatExchange(kind, tuple(prompt), response))
            responses.append(response)
            try:
                decision = parse_match_response(response)
            except MalformedResponse as exc:
                capture(f"{kind}-parse[{run_index}]", exc)
                decisions.append(None)
                reports.append(None)
                continue
            decisions.append(decision)
            try:
                reports.append(explanation_consistency(decision, target, ranking))
            except (SelectionNotInCandidates, EmptyExplanation):
                # A run may cite nothing recognizable; its score is undefined.
                reports.append(None)
        return tuple(responses), tuple(decisions), tuple(reports)

    started = time.perf_counter()
    match_prompt = build_matching_prompt(target, ranking)
    run_responses, run_decisions, run_reports = matching_round(match_prompt, "matching")
    timings["matching"] = time.perf_counter() - started

    valid = [decision for decision in run_decisions if decision is not None]
    if not valid:
        errors.append(StageError(
            "aggregate", "NoUsableDecision", "no run produced a usable selection",
        ))
        return finish(
            ranking=ranking,
            run_responses=run_responses,
            run_decisions=run_decisions,
            run_reports=run_reports,
        )
    final, agreement = aggregate_runs(valid, candidate_order=ranking.numeric_ids())
    final_index = run_decisions.index(final)
    report = run_reports[final_index]
    if report is None:
        try:
            explanation_consistency(final, target, ranking)
        except (SelectionNotInCandidates, EmptyExplanation) as exc:
            capture("consistency", exc)

    gt_element: Optional[WebElementRecord] = None
    if case.gt_xpath is not None:
        gt_element = case.new_page.find_by_xpath(case.gt_xpath)
        if gt_element is None:
            capture("ground-truth", MissingGroundTruth(
                f"no element at {case.gt_xpath!r} in the new page"
            ))

    def do_repair(decision: MatchDecision, stage: str):
        selected = ranking.find_by_numeric_id(decision.selected_numeric_id)
        if selected is None:
            capture(stage, SelectionNotInCandidates(
                f"selected numericId {decision.selected_numeric_id} not among candidates"
            ))
            return (), None, None
        prompt = build_repair_prompt(selected, case.broken_statement)
        try:
            response = chat_send(prompt, config, backend, backoff=backoff, sleep=sleep)
        except (TransportError, AuthError, TokenLimitError) as exc:
            capture(stage, exc)
            return (), None, selected
        exchanges.append(ChatExchange("repair", tuple(prompt), response))
        try:
            statements = tuple(parse_repair_response(response))
        except NoRepairFound as exc:
            capture(stage, exc)
            return (), None, selected
        assessment: Optional[RepairAssessment] = None
        if gt_element is not None:
            try:
                assessment = assess_repair(case.broken_statement, list(statements), gt_element)
            except UnsupportedSyntax as exc:
                capture(f"{stage}-assess", exc)
        return statements, assessment, selected

    started = time.perf_counter()
    statements, assessment, selected = do_repair(final, "repair")
    timings["repair"] = time.perf_counter() - started

    evaluation_correctness: Optional[bool] = None
    if case.gt_xpath is not None:
        evaluation_correctness = selected is not None and selected.xpath == case.gt_xpath

    self_corrected = False
    post_responses: tuple[str, ...] = ()
    post_decisions: tuple[Optional[MatchDecision], ...] = ()
    post_final: Optional[MatchDecision] = None
    post_agreement: Optional[Fraction] = None
    post_report: Optional[ConsistencyReport] = None
    final_statements, final_assessment = statements, assessment
    pre_statements: tuple[str, ...] = ()
    pre_assessment: Optional[RepairAssessment] = None

    wants_correction = (
        self_correct
        and report is not None
        and should_self_correct(report, evaluation_correctness)
    )
    if wants_correction:
        started = time.perf_counter()
        try:
            correction_prompt = build_self_correction_prompt(
                match_prompt, final.raw_text, report.inconsistent_attributes
            )
        except NoInconsistency as exc:
            capture("self_correction", exc)
            correction_prompt = None
        if correction_prompt is not None:
            self_corrected = True
            post_responses, post_decisions, post_reports = matching_round(
                correction_prompt, "self_correction"
            )
            post_valid = [d for d in post_decisions if d is not None]
            if post_valid:
                post_final, post_agreement = aggregate_runs(
                    post_valid, candidate_order=ranking.numeric_ids()
                )
                post_report = post_reports[post_decisions.index(post_final)]
                pre_statements, pre_assessment = statements, assessment
                final_statements, final_assessment, _ = do_repair(post_final, "post-repair")
            else:
                errors.append(StageError(
                    "self_correction", "NoUsableDecision",
                    "no correction run produced a usable selection",
                ))
        timings["self_correction"] = time.perf_counter() - started

    return finish(
        ranking=ranking,
        run_responses=run_responses,
        run_decisions=run_decisions,
        run_reports=run_reports,
        final_decision=final,
        agreement=agreement,
        consistency_report=report,
        self_corrected=self_corrected,
        post_run_responses=post_responses,
        post_run_decisions=post_decisions,
        post_decision=post_final,
        post_agreement=post_agreement,
        post_report=post_report,
        pre_correction_statements=pre_statements,
        pre_correction_assessment=pre_assessment,
        repaired_statements=final_statements,
        assessment=final_assessment,
    )


def outcome_to_artifact(case: BreakageCase, outcome: BreakageOutcome) -> BreakageArtifact:
    """Project an outcome to the slice the metrics need.

    Stability and attribute statistics use the initial round's runs; the
    repair verdict and consistency score come from the decision that
    produced the final repair.
    """
    per_run_match: tuple[bool, ...] = ()
    if case.gt_xpath is not None and outcome.ranking is not None:
        bits = []
        for decision in outcome.run_decisions:
            element = (
                outcome.ranking.find_by_numeric_id(decision.selected_numeric_id)
                if decision is not None
                else None
            )
            bits.append(element is not None and element.xpath == case.gt_xpath)
        per_run_match = tuple(bits)
    effective = outcome.effective_decision()
    selected_xpath = None
    if effective is not None and outcome.ranking is not None:
        element = outcome.ranking.find_by_numeric_id(effective.selected_numeric_id)
        selected_xpath = element.xpath if element is not None else None
    report = outcome.effective_report()
    return BreakageArtifact(
        breakage_id=outcome.breakage_id,
        application=outcome.application,
        ranking=outcome.ranking,
        decisions=outcome.run_decisions,
        reports=outcome.run_reports,
        final_decision=effective,
        final_ec=report.ec if report is not None else None,
        final_selected_xpath=selected_xpath,
        repair_verdict=outcome.assessment.verdict if outcome.assessment else None,
        per_run_match_correct=per_run_match,
    )


def run_batch(
    cases: Sequence[BreakageCase],
    backend: ChatBackend,
    config: RunConfig,
    *,
    self_correct: bool = True,
    parallelism: int = 1,
    backoff: float = 0.0,
    sleep: Callable[[float], None] = time.sleep,
    k_grid: Sequence[int] = tuple(range(1, 11)),
    credit_mode: str = "best-of",
    attribute_mode: str = "all",
) -> BatchResult:
    """Run every case; outcomes keep input order regardless of parallelism.

    A metrics report is built when at least one case carries ground truth.
    """

    def job(case: BreakageCase) -> BreakageOutcome:
        scoped = (
            backend.for_breakage(case.breakage_id)
            if isinstance(backend, MockChatBackend)
            else backend
        )
        return run_breakage(
            case, scoped, config,
            self_correct=self_correct, backoff=backoff, sleep=sleep,
        )

    if parallelism <= 1:
        outcomes = [job(case) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(job, cases))

    report: Optional[MetricsReport] = None
    ground_truth = [
        GroundTruthEntry(case.breakage_id, case.application, case.target_xpath, case.gt_xpath)
        for case in cases
        if case.gt_xpath is not None
    ]
    if ground_truth:
        artifacts = [
            outcome_to_artifact(case, outcome) for case, outcome in zip(cases, outcomes)
        ]
        report = build_report(
            artifacts, ground_truth,
            k_grid=k_grid, credit_mode=credit_mode, attribute_mode=attribute_mode,
        )
    return BatchResult(tuple(outcomes), report)


# --- manifest -----------------------------------------------------------------------

def load_manifest(path) -> list[BreakageCase]:
    """Read a batch manifest (JSON); snapshot paths resolve relative to it.

    Each breakage record names the snapshot files, the broken statement,
    the target xpath and optionally matcher, ground truth, layout sidecars
    and screenshots.
    """
    manifest_path = Path(path)
    try:
        payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("breakages"), list):
        raise MalformedRecord("manifest must be an object with a 'breakages' list")
    base = manifest_path.parent
    snapshots: dict[tuple, PageSnapshot] = {}

    def load_page(record: dict, side: str) -> PageSnapshot:
        snap_rel = record.get(f"{side}_snapshot")
        if not snap_rel:
            raise MalformedRecord(f"breakage {record.get('id')!r} lacks {side}_snapshot")
        layout_rel = record.get(f"{side}_layout")
        shot_rel = record.get(f"{side}_screenshot")
        key = (snap_rel, layout_rel, shot_rel)
        if key not in snapshots:
            page = load_snapshot(base / snap_rel)
            if layout_rel:
                page, _ = load_layout(page, base / layout_rel)
            if shot_rel:
                page = with_screenshot(page, load_screenshot(base / shot_rel))
            snapshots[key] = page
        return snapshots[key]

    cases = []
    for record in payload["breakages"]:
        for required in ("id", "statement", "target_xpath"):
            if required not in record:
                raise MalformedRecord(f"manifest breakage lacks {required!r}: {record!r}")
        matcher = MatcherAlgorithm(record.get("matcher", "edit-distance"))
        cases.append(BreakageCase(
            breakage_id=str(record["id"]),
            application=str(record.get("application", "")),
            old_page=load_page(record, "old"),
            new_page=load_page(record, "new"),
            broken_statement=record["statement"],
            target_xpath=record["target_xpath"],
            matcher=matcher,
            gt_xpath=record.get("gt_xpath"),
            k=int(record.get("k", DEFAULT_K)),
        ))
    return cases


# --- outcome log -----------------------------------------------------------------------

_LOG_SCHEMA = "uirepair-outcomes/1"


def _decision_dict(decision: Optional[MatchDecision]) -> Optional[dict]:
    if decision is None:
        return None
    return {
        "selected": decision.selected_numeric_id,
        "mentioned": list(decision.mentioned_attributes),
        "unrecognized": list(decision.unrecognized_mentions),
        "raw": decision.raw_text,
    }


def _report_dict(report: Optional[ConsistencyReport]) -> Optional[dict]:
    if report is None:
        return None
    return {
        "ec": str(report.ec),
        "checks": [[check.attribute, check.consistent] for check in report.per_attribute],
        "inconsistent": list(report.inconsistent_attributes),
    }


def _ranking_dict(ranking: Optional[CandidateRanking]) -> Optional[dict]:
    if ranking is None:
        return None
    return {
        "algorithm": ranking.algorithm.name,
        "target_xpath": ranking.target_xpath,
        "k": ranking.k,
        "entries": [
            {
                "id": entry.element.numeric_id,
                "xpath": entry.element.xpath,
                "score": entry.score,
            }
            for entry in ranking.entries
        ],
    }


def _assessment_dict(assessment: Optional[RepairAssessment]) -> Optional[dict]:
    if assessment is None:
        return None
    return {
        "verdict": assessment.verdict.value,
        "pattern": assessment.fix_pattern.value,
        "strategy_changed": assessment.locator_strategy_changed,
        "locator_value_correct": assessment.locator_value_correct,
        "non_locator_preserved": assessment.non_locator_preserved,
        "added_statements": assessment.added_statements,
    }


def outcome_log_payload(outcomes: Sequence[BreakageOutcome]) -> dict:
    """Deterministic, timing-free JSON payload for a batch of outcomes."""
    return {
        "schema": _LOG_SCHEMA,
        "outcomes": [
            {
                "breakage_id": o.breakage_id,
                "application": o.application,
                "target_xpath": o.target_xpath,
                "gt_xpath": o.gt_xpath,
                "matcher": o.matcher.value,
                "ranking": _ranking_dict(o.ranking),
                "runs": [
                    {
                        "response": response,
                        "decision": _decision_dict(decision),
                        "report": _report_dict(report),
                    }
                    for response, decision, report in zip(
                        o.run_responses, o.run_decisions, o.run_reports
                    )
                ],
                "final": _decision_dict(o.final_decision),
                "agreement": str(o.agreement) if o.agreement is not None else None,
                "consistency": _report_dict(o.consistency_report),
                "self_corrected": o.self_corrected,
                "post_runs": [
                    {"response": response, "decision": _decision_dict(decision)}
                    for response, decision in zip(o.post_run_responses, o.post_run_decisions)
                ],
                "post_final": _decision_dict(o.post_decision),
                "post_agreement": str(o.post_agreement) if o.post_agreement is not None else None,
                "post_consistency": _report_dict(o.post_report),
                "pre_correction_statements": list(o.pre_correction_statements),
                "pre_correction_assessment": _assessment_dict(o.pre_correction_assessment),
                "repaired_statements": list(o.repaired_statements),
                "assessment": _assessment_dict(o.assessment),
                "exchanges": [
                    {
                        "kind": exchange.kind,
                        "prompt": [
                            {"role": message.role, "content": message.content}
                            for message in exchange.prompt
                        ],
                        "response": exchange.response,
                    }
                    for exchange in o.exchanges
                ],
                "errors": [
                    {"stage": e.stage, "type": e.error_type, "message": e.message}
                    for e in o.errors
                ],
            }
            for o in outcomes
        ],
    }


def write_outcome_log(outcomes: Sequence[BreakageOutcome], path) -> None:
    payload = outcome_log_payload(outcomes)
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _record_from_entry(entry: dict) -> WebElementRecord:
    # Only id and xpath are logged; the rest is irrelevant to metrics.
    return WebElementRecord(
        numeric_id=int(entry["id"]), id="", name="", class_name="",
        xpath=entry["xpath"], text="", tag_name="", link_text="",
        x=0, y=0, width=0, height=0, is_leaf=True,
    )


def _decision_from_dict(data: Optional[dict]) -> Optional[MatchDecision]:
    if data is None:
        return None
    return MatchDecision(
        selected_numeric_id=int(data["selected"]),
        mentioned_attributes=tuple(data.get("mentioned", ())),
        unrecognized_mentions=tuple(data.get("unrecognized", ())),
        raw_text=data.get("raw", ""),
    )


def _report_from_dict(data: Optional[dict]) -> Optional[ConsistencyReport]:
    if data is None:
        return None
    from .explanation_validator import AttributeCheck

    checks = tuple(
        AttributeCheck(attribute=attr, consistent=bool(bit), most_similar_ids=frozenset())
        for attr, bit in data.get("checks", [])
    )
    return ConsistencyReport(
        ec=Fraction(data["ec"]),
        per_attribute=checks,
        inconsistent_attributes=tuple(data.get("inconsistent", ())),
        mentioned_count=len(checks),
    )


def artifacts_from_outcome_log(
    payload: dict, ground_truth: Sequence[GroundTruthEntry]
) -> list[BreakageArtifact]:
    """Rebuild metric inputs from a written outcome log."""
    if payload.get("schema") != _LOG_SCHEMA:
        raise MalformedRecord(f"unknown outcome log schema: {payload.get('schema')!r}")
    gt_by_breakage = {entry.breakage_id: entry for entry in ground_truth}
    artifacts = []
    for data in payload["outcomes"]:
        ranking = None
        if data.get("ranking") is not None:
            r = data["ranking"]
            ranking = CandidateRanking(
                algorithm=MatcherAlgorithm[r["algorithm"]],
                target_xpath=r["target_xpath"],
                k=int(r["k"]),
                entries=tuple(
                    RankEntry(_record_from_entry(entry), float(entry["score"]))
                    for entry in r["entries"]
                ),
            )
        decisions = tuple(_decision_from_dict(run.get("decision")) for run in data["runs"])
        reports = tuple(_report_from_dict(run.get("report")) for run in data["runs"])
        self_corrected = bool(data.get("self_corrected"))
        post_final = _decision_from_dict(data.get("post_final"))
        if self_corrected and post_final is not None:
            effective = post_final
            effective_report = _report_from_dict(data.get("post_consistency"))
        else:
            effective = _decision_from_dict(data.get("final"))
            effective_report = _report_from_dict(data.get("consistency"))

        entry = gt_by_breakage.get(data["breakage_id"])
        per_run_match: tuple[bool, ...] = ()
        selected_xpath = None
        if ranking is not None:
            if effective is not None:
                element = ranking.find_by_numeric_id(effective.selected_numeric_id)
                selected_xpath = element.xpath if element is not None else None
            if entry is not None:
                bits = []
                for decision in decisions:
                    element = (
                        ranking.find_by_numeric_id(decision.selected_numeric_id)
                        if decision is not None
                        else None
                    )
                    bits.append(element is not None and element.xpath == entry.gt_xpath)
                per_run_match = tuple(bits)

        verdict = None
        if data.get("assessment") is not None:
            verdict = Verdict(data["assessment"]["verdict"])
        artifacts.append(BreakageArtifact(
            breakage_id=data["breakage_id"],
            application=data.get("application", ""),
            ranking=ranking,
            decisions=decisions,
            reports=reports,
            final_decision=effective,
            final_ec=effective_report.ec if effective_report is not None else None,
            final_selected_xpath=selected_xpath,
            repair_verdict=verdict,
            per_run_match_correct=per_run_match,
        ))
    return artifacts
