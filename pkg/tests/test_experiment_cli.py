import hashlib
import json
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from modperf.cli import main
from modperf.experiment import ExperimentConfig, run_analyze, run_generate, run_model, run_report

TINY = dict(
    global_seed=424242,
    n_systems=2,
    trials=2,
    train_sizes=(20, 40),
    n_train=50,
    n_test=30,
    levels=("null", "partial", "ideal"),
    budget_evaluations=2,
    cv_folds=2,
    forest_scale="desk",
)


def _tiny_config(tmp_path, **overrides):
    params = dict(TINY)
    params.update(overrides)
    return ExperimentConfig(out_dir=str(tmp_path / "out"), **params)


def tree_hash(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("tiny")
    config = _tiny_config(base)
    run_generate(config)
    run_model(config)
    run_analyze(config)
    run_report(config)
    return config, Path(config.out_dir)


def test_generate_writes_manifest_and_systems(tiny_run):
    config, out = tiny_run
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["systems"]) == 2
    seeds = {e["seed"] for e in manifest["systems"]}
    assert len(seeds) == 2
    for entry in manifest["systems"]:
        system_dir = out / "systems" / entry["system"]
        assert (system_dir / "graph.json").exists()
        assert (system_dir / "knowledge.json").exists()
        for trial in entry["trials"]:
            assert (system_dir / trial["dir"] / "train.csv").exists()


def test_model_emits_requested_levels_only(tiny_run):
    config, out = tiny_run
    unit_dir = out / "curves" / "s0000_t00"
    names = sorted(p.name for p in unit_dir.glob("*.json"))
    assert names == sorted(
        f"{level}_{metric}.json"
        for level in ("null", "partial", "ideal")
        for metric in ("acc", "scc")
    )
    doc = json.loads((unit_dir / "null_scc.json").read_text())
    assert doc["level"] == "null" and doc["metric"] == "scc"
    assert [p["n"] for p in doc["points"]] == [20, 40]
    assert all(p["error"] is None for p in doc["points"])
    assert doc["budget"] == 2


def test_curve_files_round_trip(tiny_run):
    config, out = tiny_run
    for s in range(config.n_systems):
        for t in range(config.trials):
            unit_dir = out / "curves" / config.unit_id(s, t)
            files = list(unit_dir.glob("*.json"))
            assert len(files) == 6  # 3 levels x 2 metrics
            for path in files:
                doc = json.loads(path.read_text())
                assert doc["system_id"] == config.unit_id(s, t)
                assert {"system_id", "level", "metric", "points", "seeds", "budget"} <= set(doc)
                assert json.loads(json.dumps(doc)) == doc


def test_fairness_log_identical_budget(tiny_run):
    config, out = tiny_run
    fairness = json.loads((out / "fairness" / "s0001_t01.json").read_text())
    assert fairness["budget"] == 2
    assert len(fairness["candidates"]) == 2
    assert set(fairness["prefix_sha"]) == {"20", "40"}


def test_analyze_outputs_matrix_tests_heatmap(tiny_run):
    config, out = tiny_run
    analysis = out / "analysis"
    for metric in ("acc", "scc"):
        matrix = json.loads((analysis / f"matrix_{metric}.json").read_text())
        assert len(matrix["cells"]) == 9
        tests = json.loads((analysis / f"tests_{metric}.json").read_text())
        assert len(tests) == 27
        svg = (analysis / f"heatmap_{metric}.svg").read_text()
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        rects = [el for el in root.iter() if el.tag.endswith("rect")]
        assert len(rects) >= 10  # 9 cells + background
        hardness_rows = json.loads((analysis / f"hardness_{metric}.json").read_text())
        assert len(hardness_rows) == 4
        assert all(0.0 <= r["value"] <= 1.0 for r in hardness_rows)
    gaps = json.loads((analysis / "gaps.json").read_text())
    assert gaps["missing_units"] == []


def test_report_contains_matrix_table(tiny_run):
    config, out = tiny_run
    text = (out / "analysis" / "report.md").read_text()
    assert "Metric: acc" in text and "Metric: scc" in text
    assert "| partial |" in text


def test_resume_skips_completed_units(tiny_run, capsys):
    config, out = tiny_run
    resumed = ExperimentConfig.from_dict(
        json.loads((out / "config.json").read_text()),
        out_dir=str(out), resume=True,
    )
    before = tree_hash(out / "systems")
    run_generate(resumed)
    assert tree_hash(out / "systems") == before
    curves_before = tree_hash(out / "curves")
    docs = run_model(resumed)
    assert all(d.get("resumed") for d in docs)
    assert tree_hash(out / "curves") == curves_before


def test_config_json_omits_runtime_fields(tiny_run):
    config, out = tiny_run
    doc = json.loads((out / "config.json").read_text())
    assert "out_dir" not in doc and "jobs" not in doc and "resume" not in doc
    restored = ExperimentConfig.from_dict(doc, out_dir="elsewhere")
    assert restored.global_seed == config.global_seed
    assert restored.train_sizes == config.train_sizes


def test_full_rerun_is_byte_identical(tmp_path):
    config_a = _tiny_config(tmp_path / "a", n_systems=1, trials=1)
    config_b = _tiny_config(tmp_path / "b", n_systems=1, trials=1)
    for config in (config_a, config_b):
        run_generate(config)
        run_model(config)
        run_analyze(config)
    assert tree_hash(Path(config_a.out_dir)) == tree_hash(Path(config_b.out_dir))


def test_parallel_generation_matches_serial(tmp_path):
    serial = _tiny_config(tmp_path / "serial", n_systems=3, trials=1)
    parallel = ExperimentConfig.from_dict(
        serial.persisted_dict(), out_dir=str(tmp_path / "parallel"), jobs=2,
    )
    run_generate(serial)
    run_generate(parallel)
    assert tree_hash(Path(serial.out_dir)) == tree_hash(Path(parallel.out_dir))


def test_cli_error_emits_machine_readable_json(tmp_path, capsys):
    code = main(["analyze", "--out", str(tmp_path / "missing")])
    captured = capsys.readouterr()
    assert code == 1
    error = json.loads(captured.err)
    assert error["stage"] == "analyze"
    assert "error" in error


def test_cli_rejects_bad_flag_values(tmp_path, capsys):
    code = main(["generate", "--systems", "0", "--out", str(tmp_path / "x")])
    assert code == 1
    assert "error" in json.loads(capsys.readouterr().err)


def test_cli_end_to_end_subprocess(tmp_path):
    out = tmp_path / "cli_out"
    result = subprocess.run(
        [
            sys.executable, "-m", "modperf.cli", "all",
            "--systems", "1", "--trials", "1",
            "--train-sizes", "20,40", "--n-train", "50", "--n-test", "25",
            "--levels", "null,ideal", "--budget", "2",
            "--seed", "7", "--out", str(out),
        ],
        capture_output=True, text=True, timeout=300,
    )
    assert result.returncode == 0, result.stderr
    assert (out / "analysis" / "summary.json").exists()
    summary = json.loads(result.stdout)
    assert summary["metrics"]["acc"]["units"] == 1


def test_cli_single_metric_restricts_outputs(tmp_path):
    out = tmp_path / "scc_only"
    code = main(
        [
            "all", "--systems", "1", "--trials", "1",
            "--train-sizes", "20,40", "--n-train", "50", "--n-test", "25",
            "--levels", "null,ideal", "--budget", "2", "--metric", "scc",
            "--seed", "11", "--out", str(out),
        ]
    )
    assert code == 0
    names = sorted(p.name for p in (out / "curves" / "s0000_t00").glob("*.json"))
    assert names == ["ideal_scc.json", "null_scc.json"]
    assert (out / "analysis" / "matrix_scc.json").exists()
    assert not (out / "analysis" / "matrix_acc.json").exists()


def test_model_failure_isolated_and_recorded(tmp_path):
    config = _tiny_config(tmp_path, n_systems=2, trials=1)
    run_generate(config)
    # corrupt one system's graph; the other unit must still complete
    graph_path = Path(config.out_dir) / "systems" / "s0000" / "graph.json"
    graph_path.write_text("{not json")
    run_model(config)
    out = Path(config.out_dir)
    errors = json.loads((out / "model_errors.json").read_text())
    assert len(errors) == 1 and errors[0]["unit"] == "s0000_t00"
    assert (out / "curves" / "s0001_t00" / "null_scc.json").exists()
    summary = run_analyze(config)
    gaps = json.loads((out / "analysis" / "gaps.json").read_text())
    assert "s0000_t00" in gaps["missing_units"]
    assert summary["metrics"]["scc"]["units"] == 1


def test_cli_config_file_with_flag_overrides(tmp_path):
    config_file = tmp_path / "conf.json"
    config_file.write_text(json.dumps({**TINY, "train_sizes": [20, 40], "levels": ["null", "ideal"]}))
    out = tmp_path / "from_file"
    code = main(
        ["generate", "--config", str(config_file), "--systems", "1", "--out", str(out)]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["systems"]) == 1  # flag overrode the file's 2
    persisted = json.loads((out / "config.json").read_text())
    assert persisted["global_seed"] == TINY["global_seed"]
