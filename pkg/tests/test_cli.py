"""Command line behavior: subcommands, config precedence and exit codes."""

import json

import pytest

import helpers
from helpers import DATA_DIR, PageBuilder, write_batch_corpus
from uirepair import cli, load_snapshot, save_snapshot
from uirepair import llm_bridge
from uirepair.errors import MalformedRecord, TransportError

CONFIG_KEYS = (
    "MODEL", "TEMPERATURE", "RUNS", "K", "MATCHER", "BACKEND",
    "API_URL", "API_KEY", "PARALLELISM",
)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in CONFIG_KEYS:
        monkeypatch.delenv(f"UIREPAIR_{key}", raising=False)


@pytest.fixture
def corpus(tmp_path):
    return write_batch_corpus(tmp_path / "corpus", count=5)


@pytest.fixture
def no_network(monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(llm_bridge.requests, "post", refuse)


# --- extract ---------------------------------------------------------------------------

def test_extract_to_snapshot_file(tmp_path, capsys):
    out = tmp_path / "page.snapshot"
    code = cli.main(["extract", str(DATA_DIR / "claroline_login.html"),
                     "--output", str(out)])
    assert code == 0
    assert "wrote 21 elements" in capsys.readouterr().out
    snapshot = load_snapshot(out)
    assert len(snapshot.records) == 21
    assert snapshot.label == "claroline_login"


def test_extract_to_stdout(capsys):
    code = cli.main(["extract", str(DATA_DIR / "claroline_login.html")])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 21
    assert all(line.startswith("{numericId=") for line in lines)


def test_extract_applies_layout_and_warns_on_unknown_rows(tmp_path, capsys):
    layout = tmp_path / "layout.tsv"
    layout.write_text("/html[1]\t1\t2\t3\t4\n/nope[1]\t0\t0\t9\t9\n", encoding="utf-8")
    out = tmp_path / "page.snapshot"
    code = cli.main(["extract", str(DATA_DIR / "claroline_login.html"),
                     "--layout", str(layout), "--output", str(out)])
    assert code == 0
    assert "/nope[1]" in capsys.readouterr().err
    root = load_snapshot(out).find_by_xpath("/html[1]")
    assert (root.x, root.y, root.width, root.height) == (1, 2, 3, 4)


def test_extract_missing_file_is_io_error(tmp_path):
    assert cli.main(["extract", str(tmp_path / "absent.html")]) == 3


# --- match ------------------------------------------------------------------------------

def match_args(corpus, *extra):
    return [
        "match", "--old", str(corpus["old"]), "--new", str(corpus["new"]),
        "--target", helpers.CATEGORY_TARGET_XPATH, *extra,
    ]


def test_match_prints_the_ranking(corpus, capsys):
    assert cli.main(match_args(corpus)) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 10
    first = lines[0].split("\t")
    assert first[0] == "EDIT_DISTANCE"
    assert first[2:4] == ["1", "70"]


def test_match_writes_output_file(corpus, tmp_path):
    out = tmp_path / "ranking.tsv"
    assert cli.main(match_args(corpus, "--output", str(out))) == 0
    assert out.read_text(encoding="utf-8").count("\n") == 10


def test_match_unknown_matcher_is_usage_error(corpus):
    assert cli.main(match_args(corpus, "--matcher", "psychic")) == 2


def test_match_vista_requires_screenshots(corpus):
    assert cli.main(match_args(corpus, "--matcher", "vista")) == 2


def test_match_unknown_target_is_data_error(corpus):
    args = [
        "match", "--old", str(corpus["old"]), "--new", str(corpus["new"]),
        "--target", "/nope[1]",
    ]
    assert cli.main(args) == 5


# --- repair -----------------------------------------------------------------------------

def repair_args(corpus, log_path, *extra):
    return [
        "repair", str(corpus["manifest"]), "--output", str(log_path),
        "--mock-script", str(corpus["script"]), *extra,
    ]


def test_repair_writes_log_and_summary(corpus, tmp_path, capsys, no_network):
    log_path = tmp_path / "outcomes.json"
    assert cli.main(repair_args(corpus, log_path)) == 0
    out = capsys.readouterr().out
    assert "b00\tselected=70\tec=1\tself_corrected=false\tverdict=correct" in out
    assert f"wrote outcome log to {log_path}" in out
    assert "total" in out  # the metrics table follows the summary
    payload = json.loads(log_path.read_text(encoding="utf-8"))
    assert payload["schema"] == "uirepair-outcomes/1"
    assert len(payload["outcomes"]) == 5


def test_repair_parallelism_is_byte_identical(corpus, tmp_path, no_network):
    log_a = tmp_path / "a.json"
    log_b = tmp_path / "b.json"
    assert cli.main(repair_args(corpus, log_a, "--parallelism", "1")) == 0
    assert cli.main(repair_args(corpus, log_b, "--parallelism", "4")) == 0
    assert log_a.read_bytes() == log_b.read_bytes()


def test_repair_no_self_correct_flag(corpus, tmp_path, no_network):
    log_path = tmp_path / "outcomes.json"
    assert cli.main(repair_args(corpus, log_path, "--no-self-correct")) == 0


def test_repair_mock_backend_requires_a_script(corpus, tmp_path):
    args = ["repair", str(corpus["manifest"]), "--output", str(tmp_path / "o.json")]
    assert cli.main(args) == 2


def test_repair_live_backend_without_credential_stays_offline(
    corpus, tmp_path, capsys, no_network
):
    # Per-run auth failures are captured per breakage, not fatal, and the
    # credential check fires before any connection is opened.
    log_path = tmp_path / "outcomes.json"
    args = [
        "repair", str(corpus["manifest"]), "--output", str(log_path),
        "--backend", "live",
    ]
    assert cli.main(args) == 0
    assert "selected=-" in capsys.readouterr().out
    payload = json.loads(log_path.read_text(encoding="utf-8"))
    errors = payload["outcomes"][0]["errors"]
    assert any(e["type"] == "AuthError" for e in errors)


def test_repair_unknown_backend_is_usage_error(corpus, tmp_path):
    args = repair_args(corpus, tmp_path / "o.json", "--backend", "telepathy")
    assert cli.main(args) == 2


# --- evaluate ----------------------------------------------------------------------------

@pytest.fixture
def outcome_log(corpus, tmp_path, no_network):
    log_path = tmp_path / "outcomes.json"
    assert cli.main(repair_args(corpus, log_path)) == 0
    return log_path


def test_evaluate_prints_a_table(corpus, outcome_log, capsys):
    capsys.readouterr()
    code = cli.main([
        "evaluate", str(outcome_log), "--ground-truth", str(corpus["ground_truth"]),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "total" in out and "tracker" in out
    assert "HR@10=1.000" in out


def test_evaluate_json_report(corpus, outcome_log, capsys):
    capsys.readouterr()
    code = cli.main([
        "evaluate", str(outcome_log), "--ground-truth", str(corpus["ground_truth"]),
        "--credit", "majority", "--attributes", "structural", "--json",
    ])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["credit_mode"] == "majority"
    assert report["attribute_mode"] == "structural"
    assert report["totals"] == {"breakages": 5, "matching": 5, "repair": 5}


def test_evaluate_rejects_invalid_log(corpus, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops", encoding="utf-8")
    args = ["evaluate", str(bad), "--ground-truth", str(corpus["ground_truth"])]
    assert cli.main(args) == 5


def test_evaluate_missing_ground_truth_is_io_error(outcome_log, tmp_path):
    args = ["evaluate", str(outcome_log), "--ground-truth", str(tmp_path / "gone.tsv")]
    assert cli.main(args) == 3


# --- analyze -----------------------------------------------------------------------------

def test_analyze_diff_tallies_change_types(capsys):
    code = cli.main(["analyze", "--diff", str(DATA_DIR / "sample_changes.diff")])
    assert code == 0
    out = capsys.readouterr().out
    assert "chunk 0: modified [I]" in out
    assert "chunk 9: added [-]" in out
    assert "12 chunks" in out
    for line in ("type I: 3", "type II: 1", "type III: 2",
                 "type IV: 2", "type V: 4", "type VI: 3"):
        assert line in out


def test_analyze_source_complexity(capsys):
    code = cli.main(["analyze", "--source", str(DATA_DIR / "sample_test.java")])
    assert code == 0
    assert "loc=14 actions=4" in capsys.readouterr().out


def evolution_files(tmp_path):
    old = PageBuilder()
    old.add("/html[1]/div[1]", "div", id="header")
    old.add("/html[1]/div[2]", "a", id="save")
    new = PageBuilder()
    new.add("/html[1]/div[1]", "div")
    new.add("/html[1]/div[2]", "a")
    save_snapshot(old.build("old"), tmp_path / "old.snapshot")
    save_snapshot(new.build("new"), tmp_path / "new.snapshot")
    pairs = tmp_path / "pairs.tsv"
    pairs.write_text(
        "/html[1]/div[1]\t/html[1]/div[1]\tid\n"
        "/html[1]/div[2]\t/html[1]/div[2]\t\n",
        encoding="utf-8",
    )
    return tmp_path / "old.snapshot", tmp_path / "new.snapshot", pairs


def test_analyze_change_ratio(tmp_path, capsys):
    old, new, pairs = evolution_files(tmp_path)
    code = cli.main(["analyze", "--change-ratio", "id",
                     "--old", str(old), "--new", str(new), "--pairs", str(pairs)])
    assert code == 0
    assert "id: 1/2 (0.500)" in capsys.readouterr().out


def test_analyze_change_ratio_flag_requirements(tmp_path):
    old, _, pairs = evolution_files(tmp_path)
    assert cli.main(["analyze", "--change-ratio", "id", "--old", str(old),
                     "--pairs", str(pairs)]) == 2


def test_analyze_unknown_property_is_usage_error(tmp_path):
    old, new, pairs = evolution_files(tmp_path)
    assert cli.main(["analyze", "--change-ratio", "font",
                     "--old", str(old), "--new", str(new),
                     "--pairs", str(pairs)]) == 2


def test_analyze_without_work_is_usage_error():
    assert cli.main(["analyze"]) == 2


# --- configuration precedence ----------------------------------------------------------------

def parsed_match_args(*extra):
    return cli.build_parser().parse_args([
        "match", "--old", "o", "--new", "n", "--target", "t", *extra,
    ])


def test_config_defaults():
    config = cli.resolve_config(parsed_match_args())
    assert config.model == "gpt-3.5-turbo"
    assert config.temperature == 0.8
    assert (config.runs, config.k, config.parallelism) == (4, 10, 1)
    assert config.matcher == "edit-distance"
    assert config.backend == "mock"
    assert config.api_key == ""


def test_environment_overrides_defaults(monkeypatch):
    monkeypatch.setenv("UIREPAIR_K", "7")
    monkeypatch.setenv("UIREPAIR_MODEL", "local-model")
    config = cli.resolve_config(parsed_match_args())
    assert (config.k, config.model) == (7, "local-model")


def test_config_file_overrides_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("UIREPAIR_K", "7")
    settings = tmp_path / "settings.conf"
    settings.write_text(
        "# comment\n"
        "k = 3\n"
        "UIREPAIR_MODEL=filed-model\n",
        encoding="utf-8",
    )
    config = cli.resolve_config(parsed_match_args("--config", str(settings)))
    assert (config.k, config.model) == (3, "filed-model")


def test_flags_override_everything(tmp_path, monkeypatch):
    monkeypatch.setenv("UIREPAIR_K", "7")
    settings = tmp_path / "settings.conf"
    settings.write_text("k=3\n", encoding="utf-8")
    config = cli.resolve_config(
        parsed_match_args("--config", str(settings), "--k", "5")
    )
    assert config.k == 5


def test_environment_reaches_the_matcher(corpus, capsys, monkeypatch):
    monkeypatch.setenv("UIREPAIR_MATCHER", "water")
    assert cli.main(match_args(corpus)) == 0
    assert capsys.readouterr().out.startswith("WATER\t")


def test_config_file_rejects_unknown_keys(tmp_path):
    settings = tmp_path / "settings.conf"
    settings.write_text("verbosity=3\n", encoding="utf-8")
    with pytest.raises(MalformedRecord):
        cli.resolve_config(parsed_match_args("--config", str(settings)))


def test_config_file_requires_key_value_lines(tmp_path):
    settings = tmp_path / "settings.conf"
    settings.write_text("just words\n", encoding="utf-8")
    with pytest.raises(MalformedRecord):
        cli.resolve_config(parsed_match_args("--config", str(settings)))


def test_unconvertible_setting_is_usage_error(corpus, monkeypatch):
    # argparse converts typed flags itself, so feed the bad value via env.
    monkeypatch.setenv("UIREPAIR_K", "many")
    assert cli.main(match_args(corpus)) == 2


# --- exit code mapping -------------------------------------------------------------------------

def test_backend_errors_map_to_exit_four(corpus, outcome_log, monkeypatch):
    def explode(path):
        raise TransportError("endpoint unreachable")

    monkeypatch.setattr(cli, "load_ground_truth", explode)
    args = ["evaluate", str(outcome_log), "--ground-truth", "whatever"]
    assert cli.main(args) == 4
