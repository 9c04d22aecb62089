import os
import json

import pytest

import run_analysis
from core import config


def _run(*argv):
    return run_analysis.main([str(a) for a in argv])


def _read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _bundle(out_dir):
    """relative path -> bytes for every report file except the log."""
    files = {}
    for root, _, names in os.walk(out_dir):
        for name in names:
            if name == config.LOG_FILE:
                continue
            path = os.path.join(root, name)
            with open(path, "rb") as f:
                files[os.path.relpath(path, out_dir)] = f.read()
    return files


@pytest.fixture(scope="module")
def motif_days_market(tmp_path_factory):
    out = tmp_path_factory.mktemp("motif_days")
    assert _run("synth", "--scenario", "motif_days", "--output_dir", out) == 0
    return out


def _analyze(market_dir, out, *extra):
    return _run(
        "analyze",
        "--trades", market_dir / "trades.csv",
        "--reference", market_dir / "reference.csv",
        "--output_dir", out,
        *extra,
    )


def test_analyze_writes_the_bundle(motif_days_market, tmp_path):
    assert _analyze(motif_days_market, tmp_path, "--graphs", "EHG", "ELG", "NMG", "ABG") == 0
    for name in ("transactions.csv", "cleaning_report.json", "category_stats.csv", "category_stats.json",
                 "graph_stats.json", "price_fit.json", "degree_EHG.csv", "edges_NMG.csv", "scree_EHG.csv",
                 "contributions_EHG.csv", "base_networks_EHG.csv", "fitted_price_EHG.csv",
                 "core_EHG.json", "motifs_EHG.jsonl", "matrix_EHG.npy", "matrix_EHG.json", config.LOG_FILE):
        assert (tmp_path / name).is_file(), name

    cleaning = _read_json(tmp_path / "cleaning_report.json")
    assert cleaning["cleaning_report"]["dropped_duplicate_rows"] == 0
    assert set(cleaning["inputs"]) == {"trades.csv"}
    stats = _read_json(tmp_path / "category_stats.json")
    assert stats["category_stats"]["ABA"]["accounts"] == 24
    graphs = _read_json(tmp_path / "graph_stats.json")["graphs"]
    assert graphs["EHG"]["n_nodes"] <= 24 and graphs["NMG"]["n_nodes"] == 60
    fits = _read_json(tmp_path / "price_fit.json")["graphs"]
    assert set(fits) == {"EHG", "ELG", "NMG", "ABG"}
    assert fits["EHG"]["N"] == 10

    findings = [json.loads(line) for line in (tmp_path / "motifs_ABG.jsonl").read_text().splitlines()]
    assert findings, "planted motifs among abnormal accounts should surface in ABG"
    assert {f["pattern"] for f in findings} <= set(run_analysis.motif.PATTERNS)
    assert any((tmp_path / "motifs_ABG").iterdir())


def test_rerun_is_byte_identical(motif_days_market, tmp_path):
    assert _analyze(motif_days_market, tmp_path) == 0
    first = _bundle(tmp_path)
    assert _analyze(motif_days_market, tmp_path) == 0
    assert _bundle(tmp_path) == first


def test_stepwise_commands_match_analyze(motif_days_market, tmp_path):
    whole, steps = tmp_path / "whole", tmp_path / "steps"
    assert _analyze(motif_days_market, whole) == 0
    assert _run("clean", "--trades", motif_days_market / "trades.csv", "--output_dir", steps) == 0
    reference = ("--reference", motif_days_market / "reference.csv", "--output_dir", steps)
    for command in ("graph-stats", "svd", "fit", "motifs"):
        assert _run(command, *reference) == 0, command
    for name in ("scree_EHG.csv", "base_networks_NMG.csv", "fitted_price_ELG.csv", "motifs_EHG.jsonl"):
        assert (whole / name).read_bytes() == (steps / name).read_bytes(), name


def test_planted_duplicates_are_counted_exactly(tmp_path):
    market = tmp_path / "market"
    assert _run("synth", "--scenario", "single_selfloop", "--plant_duplicates", 0.1, "--output_dir", market) == 0
    assert _run("clean", "--trades", market / "trades.csv", "--output_dir", tmp_path / "out") == 0
    expected = _read_json(market / "expected_cleaning_report.json")
    actual = _read_json(tmp_path / "out" / "cleaning_report.json")["cleaning_report"]
    assert actual == expected


def test_single_selfloop_is_found(tmp_path):
    market = tmp_path / "market"
    assert _run("synth", "--scenario", "single_selfloop", "--output_dir", market) == 0
    assert _analyze(market, tmp_path / "out", "--graphs", "ABG", "--n_base_networks", 3) == 0
    truth = _read_json(market / "ground_truth.json")
    records = [json.loads(line) for line in (tmp_path / "out" / "motifs_ABG.jsonl").read_text().splitlines()]
    loops = [(r["day"], r["accounts"]) for r in records if r["pattern"] == "SelfLoop"]
    assert loops == [(truth["motifs"][0]["day"], truth["motifs"][0]["accounts"])]


def test_null_market_has_no_abnormal_motifs(tmp_path):
    market = tmp_path / "market"
    assert _run("synth", "--scenario", "null", "--output_dir", market) == 0
    assert _analyze(market, tmp_path / "out") == 0
    stats = _read_json(tmp_path / "out" / "category_stats.json")["category_stats"]
    assert stats["ABA"]["accounts"] == 0
    for kind in ("EHG", "ELG"):
        assert (tmp_path / "out" / f"motifs_{kind}.jsonl").read_text() == ""
    assert _read_json(tmp_path / "out" / "graph_stats.json")["graphs"]["EHG"] is None


def test_empty_trade_log_exits_with_input_error(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert _run("clean", "--trades", empty, "--output_dir", tmp_path / "out") == 2


def test_missing_inputs_exit_with_input_error(tmp_path):
    assert _run("analyze", "--output_dir", tmp_path) == 2
    assert _run("clean", "--trades", tmp_path / "nope.csv", "--output_dir", tmp_path) == 2


def test_bad_flag_exits_with_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        run_analysis.main(["analyze", "--graphs", "XYZ"])
    assert excinfo.value.code == 2


def test_config_file_and_env_precedence(motif_days_market, tmp_path, monkeypatch):
    monkeypatch.setenv(config.OUTPUT_DIR_ENV, str(tmp_path / "from_env"))
    settings = tmp_path / "run.json"
    settings.write_text(json.dumps({"graphs": ["NMG"], "output_dir": str(tmp_path / "from_file")}))
    assert _run("clean", "--trades", motif_days_market / "trades.csv", "--config", settings) == 0
    assert (tmp_path / "from_file" / "transactions.csv").is_file()
    assert _run("clean", "--trades", motif_days_market / "trades.csv") == 0
    assert (tmp_path / "from_env" / "transactions.csv").is_file()

    settings.write_text(json.dumps({"n_base_networks": "ten"}))
    assert _run("clean", "--trades", motif_days_market / "trades.csv", "--config", settings) == 2


def test_reference_market_tracks_the_price(tmp_path):
    market = tmp_path / "market"
    assert _run("synth", "--scenario", "reference", "--output_dir", market) == 0
    assert _analyze(market, tmp_path / "out", "--graphs", "EHG", "NMG", "ABG") == 0
    fits = _read_json(tmp_path / "out" / "price_fit.json")["graphs"]
    assert fits["EHG"]["fitted"]["pearson"] > 0.7
    assert fits["ABG"]["fitted"]["pearson"] > 0.7
    assert abs(fits["NMG"]["fitted"]["pearson"]) < 0.3
