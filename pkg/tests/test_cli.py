import csv
import json
import subprocess
import sys

import pytest

from schottky_walks.cli import CSV_COLUMNS, main
from schottky_walks.schottky import make_canonical_schottky


def run(tmp_path, *argv, config=None):
    args = list(argv) + ["--out", str(tmp_path)]
    if config is not None:
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return main(args)


def test_fixtures_match_the_canonical_set(capsys):
    assert main(["fixtures", "--N", "4"]) == 0
    assert json.loads(capsys.readouterr().out) == make_canonical_schottky(4).to_json()


def test_fixtures_to_directory(tmp_path):
    assert main(["fixtures", "--kind", "pp", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "fixtures.json").read_text())
    assert set(data) == {"f1", "f2", "sets"} and len(data["sets"]) == 4


def test_lemma_suite_s4_passes(tmp_path):
    assert run(tmp_path, "lemma-suite", "--fixture", "S4", "--trials", "50") == 0
    with open(tmp_path / "results.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and list(rows[0]) == CSV_COLUMNS
    assert all(r["bound_value"] != "" for r in rows)


def test_identity_sync_fails_with_reason(tmp_path, capsys):
    cfg = {"measure": {"fixture": "identity"}, "checkpoints": [5, 10, 20]}
    assert run(tmp_path, "sync", "--trials", "10", config=cfg) == 1
    assert "no synchronization" in capsys.readouterr().err
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "no synchronization" in summary["failures"]


@pytest.mark.parametrize("config, path", [
    ({"measure": {"fixture": "nope"}}, "measure.fixture"),
    ({"checkpoints": "many"}, "checkpoints"),
    ({"unknown_field": 1}, "unknown_field"),
])
def test_schema_errors_exit_2_with_field_path(tmp_path, capsys, config, path):
    assert run(tmp_path, "sync", config=config) == 2
    assert f"config error at {path}" in capsys.readouterr().err


def test_bad_lemma_fixture_is_a_config_error(tmp_path, capsys):
    assert run(tmp_path, "lemma-suite", "--fixture", "T4") == 2
    assert "fixture" in capsys.readouterr().err


def test_reruns_are_byte_identical(tmp_path):
    cfg = {"checkpoints": [5, 10, 15]}
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    assert run(a, "sync", "--trials", "20", "--seed", "5", config=cfg) == 0
    assert run(b, "sync", "--trials", "20", "--seed", "5", config=cfg) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_manifest_and_summary_fields(tmp_path):
    assert run(tmp_path, "lemma-suite", "--fixture", "S4", "--seed", "9", "--trials", "20") == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["subcommand"] == "lemma-suite" and manifest["seed"] == 9
    assert manifest["started"] and manifest["finished"] and manifest["version"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["schema_version"] == 1
    assert summary["manifest"] == {"subcommand": "lemma-suite", "seed": 9, "version": manifest["version"]}


def test_threads_fall_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SCHOTTKY_THREADS", "3")
    assert run(tmp_path, "lemma-suite", "--fixture", "S4", "--trials", "10") == 0
    assert json.loads((tmp_path / "summary.json").read_text())["config"]["threads"] == 3
    assert run(tmp_path, "lemma-suite", "--fixture", "S4", "--trials", "10", "--threads", "1") == 0
    assert json.loads((tmp_path / "summary.json").read_text())["config"]["threads"] == 1
    monkeypatch.setenv("SCHOTTKY_THREADS", "lots")
    assert run(tmp_path, "lemma-suite", "--fixture", "S4") == 2


def test_exact_and_float_are_exclusive(tmp_path):
    with pytest.raises(SystemExit):
        run(tmp_path, "sync", "--exact", "--float")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "schottky_walks", "fixtures", "--N", "2"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["slots"]


@pytest.mark.parametrize("w", ["identity", "random"])
def test_pivot_stats_bounds_hold(tmp_path, w):
    assert run(tmp_path, "pivot-stats", "--trials", "200", config={"w": w, "contexts": 2}) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    gain = summary["results"]["pivot_gain"]
    assert summary["failures"] == [] and min(gain["fractions"]) >= gain["bound"]


def test_local_contraction_defaults_to_exact_below_float_horizon(tmp_path):
    cfg = {"checkpoints": [2, 4], "horizon": 6, "q": 0.8, "len_measure": "cantor"}
    code = run(tmp_path, "local-contraction", "--trials", "4", config=cfg)
    assert code in (0, 1)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["exact"] is None and summary["results"]["exact"] is True
    assert run(tmp_path, "local-contraction", "--trials", "4", "--float", config=cfg) in (0, 1)
    assert json.loads((tmp_path / "summary.json").read_text())["results"]["exact"] is False
    with open(tmp_path / "results.csv", newline="") as fh:
        assert {r["experiment"] for r in csv.DictReader(fh)} >= {"main2", "main3"}
