"""Repair toolkit for web UI test scripts broken by page evolution.

Snapshots two versions of a page, ranks replacement candidates for the
element a broken statement pointed at, asks a chat model to pick one and
explain itself, validates the explanation against the candidates, rewrites
the statement, and scores the whole run against ground truth.
"""

from .dom_snapshot import (
    PageSnapshot,
    WebElementRecord,
    deserialize_record,
    load_layout,
    load_screenshot,
    load_snapshot,
    normalize_text,
    parse_page,
    save_snapshot,
    serialize_record,
    with_screenshot,
)
from .errors import (
    AuthError,
    DegenerateInput,
    DegenerateTargetRect,
    EmptyCandidates,
    EmptyDocument,
    EmptyExplanation,
    EmptyPage,
    MalformedDiff,
    MalformedLayoutRow,
    MalformedRecord,
    MalformedResponse,
    MissingGroundTruth,
    MissingScreenshot,
    NoElementsWithProperty,
    NoInconsistency,
    NoRepairFound,
    SelectionNotInCandidates,
    TemplateLargerThanImage,
    TokenLimitError,
    TransportError,
    UIRepairError,
    UnknownAttribute,
    UnparseableRepair,
    UnsupportedSyntax,
    ZeroVarianceTemplate,
)
from .evaluation import (
    BreakageArtifact,
    GroundTruthEntry,
    MentionStats,
    MetricsReport,
    best_of_runs,
    build_report,
    gt_selected_rate,
    load_ground_truth,
    mention_valid_correct,
    point_biserial,
    stability,
)
from .evolution_analyzer import (
    ChunkKind,
    DiffChunk,
    ElementPairing,
    change_ratio,
    classify_chunk,
    load_pairings,
    split_diff_chunks,
    test_complexity,
)
from .explanation_validator import (
    AttributeCheck,
    ConsistencyReport,
    explanation_consistency,
    most_similar_set,
    should_self_correct,
)
from .llm_bridge import (
    ChatMessage,
    LiveChatBackend,
    MatchDecision,
    MockChatBackend,
    RunConfig,
    TransportRecorder,
    aggregate_runs,
    build_matching_prompt,
    build_repair_prompt,
    build_self_correction_prompt,
    chat_send,
    classify_prompt,
    parse_match_response,
    parse_repair_response,
    prompt_fingerprint,
    render_messages,
)
from .matchers import (
    CandidateRanking,
    MatcherAlgorithm,
    NccMatch,
    RankEntry,
    hit_ratio_at_k,
    levenshtein,
    ncc_match,
    rank_by_xpath_edit_distance,
    string_similarity,
    vista_rank,
    water_rank,
)
from .pipeline import (
    BatchResult,
    BreakageCase,
    BreakageOutcome,
    artifacts_from_outcome_log,
    load_manifest,
    outcome_log_payload,
    outcome_to_artifact,
    run_batch,
    run_breakage,
    write_outcome_log,
)
from .statement_tools import (
    FixPattern,
    LocatorSpec,
    LocatorStrategy,
    RepairAssessment,
    TestStatement,
    Verdict,
    assess_repair,
    classify_fix_pattern,
    generate_repair,
    parse_statement,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
