import json

import pytest

from artifact.cli import main


def _run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def test_fixed_point_values(capsys):
    code, out = _run(["fixed-point", "--alpha", "0.8330786"], capsys)
    assert code == 0
    vals = dict(line.split(" = ") for line in out.out.strip().splitlines())
    assert float(vals["q_star"]) == pytest.approx(0.56394908, abs=1e-8)
    assert len(vals["q_star"].split(".")[1]) == 11


def test_fixed_point_figure_value(capsys):
    code, out = _run(["fixed-point", "--alpha", "0.833", "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out.out)["values"]["q_star"] == pytest.approx(0.564, abs=5e-4)


@pytest.mark.parametrize("argv", [["fixed-point", "--alpha", "-1"],
                                  ["curves", "--which", "nope"],
                                  ["fixed-point", "--alpha", "abc"],
                                  ["brute", "--n", "40"],
                                  ["verify", "--part", "z"]])
def test_usage_errors_exit_2(argv, capsys):
    assert _run(argv, capsys)[0] == 2


def _csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# alpha=")
    header = lines[1].split(",")
    rows = [[float(v) if v else None for v in ln.split(",")] for ln in lines[2:]]
    return header, rows


def test_ell_curve_endpoints(tmp_path, capsys):
    out = tmp_path / "ell.csv"
    assert _run(["curves", "--which", "ell", "--npoints", "9", "--out", str(out)], capsys)[0] == 0
    header, rows = _csv(out)
    assert header == ["tau", "lambda"]
    assert rows[0][0] == -1 and rows[0][1] == pytest.approx(-0.424, abs=2e-3)
    assert rows[-1] == [1.0, 1.0]


def test_hpa_curve_at_one_is_minus_free_entropy(tmp_path, capsys):
    out = tmp_path / "hpa.csv"
    plot = tmp_path / "hpa.png"
    argv = ["curves", "--which", "HPA", "--npoints", "5", "--out", str(out), "--plot", str(plot)]
    assert _run(argv, capsys)[0] == 0
    _, rows = _csv(out)
    assert rows[-1][0] == 1.0 and abs(rows[-1][1]) < 1e-8 and rows[-1][2] is None
    assert plot.stat().st_size > 0


@pytest.mark.parametrize("which", ["qrecursion", "H", "P", "B"])
def test_other_curves(which, tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert _run(["curves", "--which", which, "--npoints", "4", "--out", str(out)], capsys)[0] == 0
    header, rows = _csv(out)
    assert len(rows) >= 4 and len(rows[0]) == len(header)


def test_verify_output_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _run(["verify", "--part", "c", "--out", str(a), "--threads", "1"], capsys)[0] == 0
    assert _run(["verify", "--part", "c", "--out", str(b), "--threads", "2"], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert {"version", "config", "constants", "cells", "budgets", "verdict"} <= set(rep)
    assert rep["verdict"] is True


def test_verify_constants(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert _run(["verify", "--part", "constants", "--out", str(out)], capsys)[0] == 0
    checks = json.loads(out.read_text())["constants_checks"]
    assert len(checks) >= 6 and all(c["pass"] for c in checks)


def test_verify_strict_mode_fails(tmp_path, capsys):
    out = tmp_path / "b.json"
    assert _run(["verify", "--part", "c", "--subdivide", "0", "--out", str(out)], capsys)[0] == 1


@pytest.mark.slow
def test_verify_refined_part_a(tmp_path, capsys):
    out = tmp_path / "a.json"
    assert _run(["verify", "--part", "a", "--refine", "2", "--out", str(out)], capsys)[0] == 0


def test_tap_command(tmp_path, capsys):
    out = tmp_path / "t.json"
    argv = ["tap", "--n", "800", "--t", "10", "--seeds", "2", "--out", str(out)]
    assert _run(argv, capsys)[0] == 0
    s = json.loads(out.read_text())["summary"]
    assert s["runs"] == 2 and s["mean_abs_q_t_minus_q_star"] < 0.05


def test_kimroche_command(tmp_path, capsys):
    out = tmp_path / "k.json"
    argv = ["kimroche", "--m", "2000", "--trials", "5", "--out", str(out)]
    assert _run(argv, capsys)[0] == 0
    assert json.loads(out.read_text())["success_fraction"] >= 0.1


def test_brute_command(tmp_path, capsys):
    out, summary, plot = tmp_path / "b.csv", tmp_path / "b.json", tmp_path / "b.png"
    argv = ["brute", "--n", "12", "--trials", "4", "--out", str(out), "--summary", str(summary),
            "--plot", str(plot)]
    assert _run(argv, capsys)[0] == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "seed,M_N,M_N_over_N,censored" and len(lines) == 6
    assert sum(json.loads(summary.read_text())["histogram"]) == 4
