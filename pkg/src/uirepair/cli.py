"""Command line front end.

Subcommands:
  extract   parse an HTML file into an element snapshot
  match     rank replacement candidates between two snapshots
  repair    run the breakages in a manifest through the whole flow
  evaluate  compute metrics from an outcome log plus a ground-truth table
  analyze   classify diff chunks, measure change ratios and test complexity

Settings resolve in order: command line flags, then a KEY=VALUE config
file, then UIREPAIR_* environment variables, then built-in defaults.

Exit codes: 2 usage, 3 file I/O, 4 backend/transport, 5 malformed data.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .dom_snapshot import (
    PageSnapshot,
    WebElementRecord,
    load_layout,
    load_screenshot,
    load_snapshot,
    parse_page,
    save_snapshot,
    serialize_record,
    with_screenshot,
)
from .errors import (
    AuthError,
    MalformedRecord,
    TokenLimitError,
    TransportError,
    UIRepairError,
)
from .evaluation import build_report, load_ground_truth
from .evolution_analyzer import (
    change_ratio,
    classify_chunk,
    load_pairings,
    split_diff_chunks,
    test_complexity,
)
from .llm_bridge import LiveChatBackend, MockChatBackend, RunConfig
from .matchers import (
    CandidateRanking,
    MatcherAlgorithm,
    format_ranking_lines,
    rank_by_xpath_edit_distance,
    vista_rank,
    water_rank,
)
from .pipeline import (
    artifacts_from_outcome_log,
    load_manifest,
    run_batch,
    write_outcome_log,
)

_DEFAULTS = {
    "model": "gpt-3.5-turbo",
    "temperature": "0.8",
    "runs": "4",
    "k": "10",
    "matcher": "edit-distance",
    "backend": "mock",
    "api_url": "https://api.openai.com/v1/chat/completions",
    "api_key": "",
    "parallelism": "1",
}


class _UsageError(Exception):
    pass


@dataclass(frozen=True)
class ToolConfig:
    model: str
    temperature: float
    runs: int
    k: int
    matcher: str
    backend: str
    api_url: str
    api_key: str
    parallelism: int

    def run_config(self) -> RunConfig:
        return RunConfig(
            model_id=self.model,
            temperature=self.temperature,
            runs_per_breakage=self.runs,
        )


def _read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedRecord(f"{path}:{line_no}: expected KEY=VALUE")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key.startswith("uirepair_"):
            key = key[len("uirepair_"):]
        if key not in _DEFAULTS:
            raise MalformedRecord(f"{path}:{line_no}: unknown setting {key!r}")
        values[key] = value.strip()
    return values


def resolve_config(args: argparse.Namespace) -> ToolConfig:
    values = dict(_DEFAULTS)
    for key in _DEFAULTS:
        env = os.environ.get(f"UIREPAIR_{key.upper()}")
        if env is not None:
            values[key] = env
    if getattr(args, "config", None):
        values.update(_read_config_file(args.config))
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    try:
        return ToolConfig(
            model=values["model"],
            temperature=float(values["temperature"]),
            runs=int(values["runs"]),
            k=int(values["k"]),
            matcher=values["matcher"],
            backend=values["backend"],
            api_url=values["api_url"],
            api_key=values["api_key"],
            parallelism=int(values["parallelism"]),
        )
    except ValueError as exc:
        raise _UsageError(f"bad setting value: {exc}") from exc


def _parse_matcher(name: str) -> MatcherAlgorithm:
    try:
        return MatcherAlgorithm(name)
    except ValueError as exc:
        choices = ", ".join(a.value for a in MatcherAlgorithm)
        raise _UsageError(f"unknown matcher {name!r}; choose from {choices}") from exc


def _rank_pages(
    matcher: MatcherAlgorithm,
    target: WebElementRecord,
    old_page: PageSnapshot,
    new_page: PageSnapshot,
    k: int,
) -> CandidateRanking:
    if matcher is MatcherAlgorithm.EDIT_DISTANCE:
        return rank_by_xpath_edit_distance(target, new_page, k)
    if matcher is MatcherAlgorithm.WATER:
        return water_rank(target, new_page, k)
    return vista_rank(target, old_page, new_page, k)


def _emit(lines: Sequence[str], output: Optional[str]) -> None:
    text = "\n".join(lines) + "\n"
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_extract(args: argparse.Namespace) -> None:
    html_path = Path(args.html)
    label = args.label or html_path.stem
    snapshot = parse_page(html_path.read_text(encoding="utf-8"), label, str(html_path))
    if args.layout:
        snapshot, unmatched = load_layout(snapshot, args.layout)
        for xpath in unmatched:
            print(f"warning: layout row for unknown xpath {xpath}", file=sys.stderr)
    if args.output:
        save_snapshot(snapshot, args.output)
        print(f"wrote {len(snapshot.records)} elements to {args.output}")
    else:
        _emit([serialize_record(record) for record in snapshot.records], None)


def cmd_match(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    matcher = _parse_matcher(config.matcher)
    old_page = load_snapshot(args.old)
    new_page = load_snapshot(args.new)
    if matcher is MatcherAlgorithm.VISTA:
        if not args.old_screenshot or not args.new_screenshot:
            raise _UsageError("the vista matcher needs --old-screenshot and --new-screenshot")
        old_page = with_screenshot(old_page, load_screenshot(args.old_screenshot))
        new_page = with_screenshot(new_page, load_screenshot(args.new_screenshot))
    target = old_page.find_by_xpath(args.target)
    if target is None:
        raise MalformedRecord(f"no element at {args.target!r} in {args.old}")
    ranking = _rank_pages(matcher, target, old_page, new_page, config.k)
    _emit(format_ranking_lines(ranking), args.output)


def _make_backend(config: ToolConfig, args: argparse.Namespace):
    if config.backend == "mock":
        if not getattr(args, "mock_script", None):
            raise _UsageError("--mock-script is required with the mock backend")
        return MockChatBackend.from_file(args.mock_script)
    if config.backend == "live":
        return LiveChatBackend(config.api_url, config.api_key)
    raise _UsageError(f"unknown backend {config.backend!r}; choose mock or live")


def cmd_repair(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    cases = load_manifest(args.manifest)
    backend = _make_backend(config, args)
    result = run_batch(
        cases,
        backend,
        config.run_config(),
        self_correct=not args.no_self_correct,
        parallelism=config.parallelism,
    )
    write_outcome_log(result.outcomes, args.output)
    for outcome in result.outcomes:
        decision = outcome.effective_decision()
        report = outcome.effective_report()
        verdict = outcome.assessment.verdict.value if outcome.assessment else "-"
        print(
            f"{outcome.breakage_id}\t"
            f"selected={decision.selected_numeric_id if decision else '-'}\t"
            f"ec={report.ec if report else '-'}\t"
            f"self_corrected={str(outcome.self_corrected).lower()}\t"
            f"verdict={verdict}"
        )
    print(f"wrote outcome log to {args.output}")
    if result.report is not None:
        print()
        print(result.report.format_table())


def cmd_evaluate(args: argparse.Namespace) -> None:
    try:
        payload = json.loads(Path(args.log).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"outcome log is not valid JSON: {exc}") from exc
    ground_truth = load_ground_truth(args.ground_truth)
    artifacts = artifacts_from_outcome_log(payload, ground_truth)
    report = build_report(
        artifacts,
        ground_truth,
        credit_mode=args.credit,
        attribute_mode=args.attributes,
    )
    if args.json:
        print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    else:
        print(report.format_table())


def cmd_analyze(args: argparse.Namespace) -> None:
    ran_something = False
    if args.diff:
        chunks = split_diff_chunks(Path(args.diff).read_text(encoding="utf-8"))
        tally: Counter[str] = Counter()
        for index, chunk in enumerate(chunks):
            kinds = classify_chunk(chunk)
            tally.update(kinds)
            label = ", ".join(sorted(kinds)) if kinds else "-"
            print(f"chunk {index}: {chunk.kind.value} [{label}]")
        print(f"{len(chunks)} chunks")
        for name in sorted(tally):
            print(f"type {name}: {tally[name]}")
        ran_something = True
    if args.source:
        loc, actions = test_complexity(Path(args.source).read_text(encoding="utf-8"))
        print(f"loc={loc} actions={actions}")
        ran_something = True
    if args.change_ratio:
        if not (args.old and args.new and args.pairs):
            raise _UsageError("--change-ratio needs --old, --new and --pairs")
        old_page = load_snapshot(args.old)
        new_page = load_snapshot(args.new)
        pairings = load_pairings(args.pairs, old_page, new_page)
        try:
            ratio = change_ratio(pairings, args.change_ratio)
        except ValueError as exc:
            raise _UsageError(str(exc)) from exc
        print(f"{args.change_ratio}: {ratio} ({float(ratio):.3f})")
        ran_something = True
    if not ran_something:
        raise _UsageError("analyze needs at least one of --diff, --source, --change-ratio")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="KEY=VALUE settings file")
    parser.add_argument("--model", help="chat model identifier")
    parser.add_argument("--temperature", type=float, help="sampling temperature")
    parser.add_argument("--runs", type=int, help="matching runs per breakage")
    parser.add_argument("--k", type=int, help="candidates per ranking")
    parser.add_argument("--matcher", help="edit-distance, water or vista")
    parser.add_argument("--backend", help="mock or live")
    parser.add_argument("--api-url", dest="api_url", help="chat completion endpoint")
    parser.add_argument("--api-key", dest="api_key", help="bearer credential")
    parser.add_argument("--parallelism", type=int, help="concurrent breakages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uirepair", description=__doc__.splitlines()[0])
    subparsers = parser.add_subparsers(dest="command", required=True)

    extract = subparsers.add_parser("extract", help="parse HTML into an element snapshot")
    extract.add_argument("html", help="HTML file to parse")
    extract.add_argument("--label", help="snapshot label (defaults to the file stem)")
    extract.add_argument("--layout", help="tab-separated geometry sidecar")
    extract.add_argument("--output", help="snapshot file to write (default: stdout)")
    extract.set_defaults(func=cmd_extract)

    match = subparsers.add_parser("match", help="rank replacement candidates")
    match.add_argument("--old", required=True, help="old page snapshot")
    match.add_argument("--new", required=True, help="new page snapshot")
    match.add_argument("--target", required=True, help="target element xpath in the old page")
    match.add_argument("--old-screenshot", dest="old_screenshot", help="old page screenshot")
    match.add_argument("--new-screenshot", dest="new_screenshot", help="new page screenshot")
    match.add_argument("--output", help="file for the ranking (default: stdout)")
    _add_config_flags(match)
    match.set_defaults(func=cmd_match)

    repair = subparsers.add_parser("repair", help="run a batch of breakages")
    repair.add_argument("manifest", help="batch manifest (JSON)")
    repair.add_argument("--output", required=True, help="outcome log to write")
    repair.add_argument("--mock-script", dest="mock_script", help="scripted responses (JSON)")
    repair.add_argument(
        "--no-self-correct", action="store_true", help="skip the correction round"
    )
    _add_config_flags(repair)
    repair.set_defaults(func=cmd_repair)

    evaluate = subparsers.add_parser("evaluate", help="metrics from an outcome log")
    evaluate.add_argument("log", help="outcome log written by the repair command")
    evaluate.add_argument("--ground-truth", dest="ground_truth", required=True,
                          help="tab-separated breakage/application/target/answer table")
    evaluate.add_argument("--credit", default="best-of", choices=("best-of", "majority"),
                          help="how runs earn matching credit")
    evaluate.add_argument("--attributes", default="all",
                          choices=("all", "structural", "non-structural"),
                          help="attribute class for the mention statistics")
    evaluate.add_argument("--json", action="store_true", help="emit the report as JSON")
    evaluate.set_defaults(func=cmd_evaluate)

    analyze = subparsers.add_parser("analyze", help="test evolution analysis")
    analyze.add_argument("--diff", help="unified diff to segment and classify")
    analyze.add_argument("--source", help="test source file for complexity measures")
    analyze.add_argument("--change-ratio", dest="change_ratio",
                         help="element property to measure across versions")
    analyze.add_argument("--old", help="old page snapshot (for --change-ratio)")
    analyze.add_argument("--new", help="new page snapshot (for --change-ratio)")
    analyze.add_argument("--pairs", help="element pairing table (for --change-ratio)")
    analyze.set_defaults(func=cmd_analyze)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AuthError, TokenLimitError, TransportError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except UIRepairError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
