import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from graphcpd.cli import main
from graphcpd.fdata import FunctionalSample
from graphcpd.io import read_sample, write_sample
from graphcpd.simlab import ArklConfig, generate_arkl

FIXTURES = Path(__file__).parent / "fixtures"
NULL = FIXTURES / "null_n50.csv"
PLANTED = FIXTURES / "planted_mid_n50.csv"
PRICES = FIXTURES / "prices.csv"


def run(*argv):
    return main([str(a) for a in argv])


def test_planted_change_is_reported(tmp_path, capsys):
    assert run("detect", PLANTED, "--seed", 1, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert len(report["change_points"]) == 1
    assert abs(report["change_points"][0] - 25) <= 3
    assert report["result"]["p_value"] < 0.05
    assert "significant change" in capsys.readouterr().out


def test_null_fixture_with_defaults(tmp_path):
    assert run("detect", NULL, "--seed", 1, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    cfg = report["manifest"]["config"]
    assert (cfg["tree"], cfg["k_trees"], cfg["statistic"], cfg["p"], cfg["alpha"], cfg["shuffles"]) == (
        "mst", 15, "maxtype", 2.0, 0.05, 1000)
    result = report["result"]
    assert result["significant"] == bool(report["change_points"])
    assert result["significant"] == (result["t_n"] > result["threshold"])


@pytest.mark.slow
def test_null_fixtures_rarely_reject(tmp_path):
    rejections = 0
    for seed in range(40):
        path = tmp_path / f"null{seed}.csv"
        write_sample(generate_arkl(ArklConfig(n=50, m=25), seed=1000 + seed), path)
        assert run("detect", path, "--seed", seed, "--out", tmp_path / f"o{seed}") == 0
        report = json.loads((tmp_path / f"o{seed}" / "report.json").read_text())
        rejections += bool(report["change_points"])
    # 95% expected quiet; 7 or more rejections out of 40 has probability < 0.001
    assert rejections <= 6


def test_outputs_name_the_manifest(tmp_path):
    assert run("detect", PLANTED, "--seed", 3, "--shuffles", 99, "--out", tmp_path) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    h = manifest["hash"]
    assert json.loads((tmp_path / "report.json").read_text())["manifest"]["hash"] == h
    assert (tmp_path / "trace.csv").read_text().startswith(f"# manifest {h}\n")
    svg = (tmp_path / "trace.svg").read_text()
    assert f"manifest {h}" in svg and 'id="trace"' in svg and 'id="threshold"' in svg
    assert manifest["input_digest"] and "wall_time_seconds" in manifest


def test_trace_csv_matches_report(tmp_path):
    assert run("detect", PLANTED, "--seed", 3, "--shuffles", 99, "--out", tmp_path) == 0
    rows = list(csv.reader(line for line in (tmp_path / "trace.csv").read_text().splitlines()
                           if not line.startswith("#")))
    assert rows[0] == ["k", "statistic"]
    scan = json.loads((tmp_path / "report.json").read_text())["result"]["scan"]
    assert [int(r[0]) for r in rows[1:]] == scan["k"]


def test_identical_invocations_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("detect", NULL, "--seed", 7, "--shuffles", 199, "--out", tmp_path / name) == 0
    for f in ("report.json", "trace.csv", "trace.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_multiple_mode(tmp_path):
    x = generate_arkl(ArklConfig(n=60, m=20), seed=5).curves.copy()
    x[30:] += 6.0
    path = tmp_path / "two.csv"
    write_sample(FunctionalSample.on_uniform_grid(x), path)
    assert run("detect", path, "--multiple", "--seed", 2, "--shuffles", 199, "--k-trees", 5,
               "--out", tmp_path / "o") == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["mode"] == "segmentation"
    assert 30 in report["change_points"] or any(abs(k - 30) <= 2 for k in report["change_points"])
    assert report["result"]["threshold_policy"] == "recalibrated per segment"


def test_malformed_row_names_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# header comment\n1,2,3\n4,five,6\n7,8,9\n")
    assert run("detect", bad, "--out", tmp_path) == 1
    err = capsys.readouterr().err
    assert "line 3" in err and "five" in err


def test_ragged_row_names_the_line(tmp_path, capsys):
    bad = tmp_path / "ragged.csv"
    bad.write_text("1,2,3\n4,5\n")
    assert run("detect", bad, "--out", tmp_path) == 1
    assert "line 2" in capsys.readouterr().err


def test_infeasible_k_exit_code(tmp_path, capsys):
    assert run("detect", NULL, "--tree", "mdp", "--k-trees", 40, "--out", tmp_path) == 2
    assert "smaller value of --k-trees" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert run("detect", NULL, "--stat", "bogus") == 1
    assert run("detect", NULL, "--alpha", 2, "--out", tmp_path) == 1
    assert run("detect", tmp_path / "missing.csv", "--out", tmp_path) == 1
    assert run() == 1


def test_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("GRAPHCPD_K_TREES", "3")
    monkeypatch.setenv("GRAPHCPD_SHUFFLES", "49")
    assert run("detect", NULL, "--seed", 1, "--out", tmp_path) == 0
    cfg = json.loads((tmp_path / "report.json").read_text())["manifest"]["config"]
    assert cfg["k_trees"] == 3 and cfg["shuffles"] == 49
    assert run("detect", NULL, "--seed", 1, "--k-trees", 2, "--out", tmp_path) == 0
    assert json.loads((tmp_path / "report.json").read_text())["manifest"]["config"]["k_trees"] == 2


def test_cidr_round_trip(tmp_path):
    assert run("cidr", PRICES, "--out", tmp_path) == 0
    curves = read_sample(tmp_path / "cidr.csv")
    prices = np.array([[float(v) for v in line.split(",")]
                       for line in PRICES.read_text().splitlines() if not line.startswith("#")])
    expected = 100 * (np.log(prices) - np.log(prices[:, :1]))
    np.testing.assert_allclose(curves.curves, expected, atol=1e-12)
    assert np.all(curves.curves[:, 0] == 0)
    again = tmp_path / "again.csv"
    write_sample(curves, again)
    assert np.array_equal(read_sample(again).curves, curves.curves)
    assert np.array_equal(read_sample(again).grid, curves.grid)


def test_cidr_to_stdout(capsys):
    assert run("cidr", PRICES) == 0
    out = capsys.readouterr().out
    assert out.startswith("# manifest ") and "\ngrid," in out


def test_cidr_rejects_nonpositive_price(tmp_path, capsys):
    bad = tmp_path / "p.csv"
    bad.write_text("1,2\n3,-4\n")
    assert run("cidr", bad) == 1
    assert "positive" in capsys.readouterr().err


def test_scenarios_listing(capsys):
    assert run("scenarios") == 0
    out = capsys.readouterr().out
    for name in ("table1-n50", "fig4-mean-sweep", "fig11-epidemic"):
        assert name in out


def test_unknown_scenario_key_is_named(tmp_path, capsys):
    desc = json.loads(json.dumps({"name": "x", "kind": "size", "data": {"n": 20, "colour": 1},
                                  "detection": {"trees": ["mst"], "k_trees": [1]}}))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(desc))
    assert run("simulate", path, "--out", tmp_path) == 1
    assert "'colour'" in capsys.readouterr().err


def test_single_replicate_warns(tmp_path, capsys):
    assert run("simulate", "table1-n50", "--replicates", 1, "--shuffles", 19,
               "--out", tmp_path) == 0
    captured = capsys.readouterr()
    assert "low-precision" in captured.err
    report = json.loads((tmp_path / "report.json").read_text())
    assert "warning" in report["report"]["metadata"]


@pytest.mark.slow
def test_table1_structure(tmp_path):
    assert run("simulate", "table1-n50", "--replicates", 200, "--out", tmp_path) == 0
    text = (tmp_path / "report.csv").read_text().splitlines()
    assert text[0].startswith("# manifest ")
    rows = list(csv.DictReader(text[1:]))
    assert len(rows) == 4 * 3 * 5
    assert {(r["tree"], r["k_trees"]) for r in rows} == {
        (t, str(k)) for t in ("mdp", "nnl", "mst") for k in (1, 3, 5, 7, 15)}
    for r in rows:
        assert r["absent"] == "True" or 0 <= float(r["rate"]) <= 1
        assert r["replicates"] == "200"
    assert (tmp_path / "size_table.svg").exists()


@pytest.mark.slow
def test_fig4_svg_has_one_curve_per_k(tmp_path):
    assert run("simulate", "fig4-mean-sweep", "--replicates", 30, "--shuffles", 99,
               "--out", tmp_path) == 0
    svg = (tmp_path / "power_curves.svg").read_text()
    for k in (1, 3, 5, 7, 15):
        assert f'id="curve-generalized-MST-{k}"' in svg
    rows = list(csv.DictReader((tmp_path / "report.csv").read_text().splitlines()[1:]))
    rate = {(float(r["value"]), int(r["k_trees"])): float(r["rate"]) for r in rows}
    ks = (1, 3, 5, 7, 15)
    # pooled over K, the largest shifts reject more often than no shift
    assert sum(rate[(1.0, k)] + rate[(-1.0, k)] for k in ks) > 2 * sum(rate[(0.0, k)] for k in ks)


def test_segmentation_scenario_writes_histogram(tmp_path):
    desc = {"name": "tiny-epidemic", "kind": "segmentation", "replicates": 3, "seed": 1,
            "data": {"n": 60, "changes": [{"location": 20, "kind": "mean", "magnitude": 5},
                                          {"location": 40, "kind": "mean", "magnitude": 0}]},
            "detection": {"statistic": "maxtype", "tree": "mst", "k_trees": 5, "shuffles": 49}}
    path = tmp_path / "seg.json"
    path.write_text(json.dumps(desc))
    assert run("simulate", path, "--out", tmp_path) == 0
    assert (tmp_path / "locations.svg").exists()
    report = json.loads((tmp_path / "report.json").read_text())["report"]
    assert report["kind"] == "segmentation"


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "graphcpd", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.startswith("graphcpd ")
