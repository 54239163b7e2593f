import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from telesched import cli
from telesched import laplace as lp


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def by_pair(table, col="mean_fidelity"):
    out = {}
    for r in table:
        out.setdefault(r["discipline_pair"], []).append(float(r[col]))
    return {k: np.array(v) for k, v in out.items()}


# ---- analyze ----


def test_fig3_lifo_pair_dominates(capsys):
    code, out, _ = run(["analyze", "--preset", "fig3"], capsys)
    assert code == 0
    table = rows(out)
    assert list(table[0]) == list(cli.ANALYZE_COLUMNS)
    assert len(table) == 60
    v = by_pair(table)
    assert np.all(v["lifo-po/lifo-po"] >= v["fifo-po/fifo-po"])
    assert np.all(v["lifo-po/lifo-po"] >= v["fifo-po/lifo-po"] - 1e-15)
    assert np.all(v["fifo-po/lifo-po"] >= v["fifo-po/fifo-po"])


def test_no_decoherence_gives_unit_fidelity(capsys):
    code, out, _ = run(["analyze", "--preset", "fig3", "--gamma", "0"], capsys)
    assert code == 0
    assert all(r["mean_fidelity"] == "1" for r in rows(out))


def test_fig4_minimum_near_unit_load(capsys):
    code, out, _ = run(["analyze", "--preset", "fig4"], capsys)
    assert code == 0
    table = [r for r in rows(out) if r["discipline_pair"] == "lifo-po/lifo-po@B10"]
    x = np.array([float(r["x"]) for r in table])
    f = np.array([float(r["mean_fidelity"]) for r in table])
    i = int(np.argmin(f))
    assert 0 < i < len(f) - 1
    assert 0.8 <= x[i] <= 1.2
    assert np.all(np.diff(f[: i + 1]) < 0) and np.all(np.diff(f[i:]) > 0)


def test_fig5_serve_probability(capsys):
    code, out, _ = run(["analyze", "--preset", "fig5"], capsys)
    assert code == 0
    ps = by_pair(rows(out), "p_serve_r")
    for b in (2, 5, 10):
        assert np.all(np.diff(ps[f"lifo-po/lifo-po@B{b}"]) < 0)
    assert np.all(ps["lifo-po/lifo-po@B2"] < ps["lifo-po/lifo-po@B5"])
    assert np.all(ps["lifo-po/lifo-po@B5"] < ps["lifo-po/lifo-po@B10"])


def test_unstable_unbounded_point_is_a_row(capsys):
    code, out, _ = run(
        ["analyze", "--disc-r", "fifo", "--buf-r", "inf", "--disc-e", "lifo-po", "--grid-min", "0.5", "--grid-max", "1.5", "--grid-points", "3"],
        capsys,
    )
    assert code == 0
    table = rows(out)
    assert [r["mean_fidelity"] for r in table][1:] == ["nan", "nan"]
    assert float(table[0]["mean_fidelity"]) < 1


def test_csv_formatting(capsys):
    _, out, _ = run(["analyze", "--grid-points", "3"], capsys)
    assert "\r" not in out and out.endswith("\n")
    for r in rows(out):
        digits = r["mean_fidelity"].replace("0.", "", 1).lstrip("0")
        assert len(digits) <= 12


# ---- simulate / compare ----


def test_simulate_same_seed_same_file(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert cli.main(["simulate", "--grid-points", "4", "--events", "20000", "--seed", "5", "-o", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert cli.main(["simulate", "--grid-points", "4", "--events", "20000", "--seed", "6", "-o", str(tmp_path / "c.csv")]) == 0
    assert (tmp_path / "c.csv").read_bytes() != paths[0].read_bytes()
    header = paths[0].read_text().split("\n")[0].split(",")
    assert header == list(cli.SIMULATE_COLUMNS)


def test_output_in_grid_order_with_threads(capsys):
    _, one, _ = run(["simulate", "--grid-points", "6", "--events", "5000", "--workers", "1"], capsys)
    _, many, _ = run(["simulate", "--grid-points", "6", "--events", "5000", "--workers", "4"], capsys)
    assert one == many
    xs = [float(r["x"]) for r in rows(one)]
    assert xs == sorted(xs)


def test_compare_passes_and_reports(tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    code, stdout, _ = run(["compare", "--preset", "fig3", "--grid-points", "3", "--events", "200000", "-o", str(out)], capsys)
    assert code == cli.EXIT_OK
    table = rows(out.read_text())
    assert list(table[0]) == list(cli.COMPARE_COLUMNS)
    assert all(r["status"] == "ok" for r in table)
    assert "ERRATA evidence" in stdout
    assert "plus_s=" in stdout and "minus_s=" in stdout
    assert "linear_solve=" in stdout and "unreduced_ratio=" in stdout


def test_compare_report_goes_to_stderr_when_csv_on_stdout(capsys):
    code, out, err = run(["compare", "--grid-points", "2", "--events", "50000", "--no-evidence"], capsys)
    assert code == 0
    assert out.startswith("x,discipline_pair,analytic")
    assert "points within tolerance" in err
    assert "ERRATA" not in err


def test_compare_flags_wrong_formula(tmp_path, capsys, monkeypatch):
    args = [
        "compare", "--gamma", "0.5", "--disc-r", "fifo", "--buf-r", "inf", "--disc-e", "lifo-po",
        "--grid-min", "0.3", "--grid-max", "0.8", "--grid-points", "3", "--events", "100000", "--no-evidence",
        "-o", str(tmp_path / "x.csv"),
    ]
    assert cli.main(args) == cli.EXIT_OK
    monkeypatch.setattr(
        lp, "fifo_inf_laplace",
        lambda a, s: lp.WaitTransform(lambda x: lp.fifo_inf_laplace_sign_flipped(a, s, x), lp.FIFO_INF, 1.0),
    )
    assert cli.main(args) == cli.EXIT_TOLERANCE
    assert "FAIL" in (tmp_path / "x.csv").read_text()


# ---- repeater ----


def test_repeater_fig6(capsys):
    code, out, _ = run(["repeater", "--preset", "fig6"], capsys)
    assert code == 0
    table = rows(out)
    assert list(table[0]) == list(cli.REPEATER_COLUMNS)
    inf = {}
    for r in table:
        inf.setdefault(int(r["buffer"]), []).append(float(r["mean_infidelity"]))
    for b, v in inf.items():
        assert np.all(np.diff(v) < 0)
        assert all(0 <= x <= 0.5 for x in v)
    assert np.all(np.array(inf[2]) < np.array(inf[5]))
    assert np.all(np.array(inf[5]) < np.array(inf[10]))
    mus = [float(r["mu"]) for r in table if r["buffer"] == "2"]
    assert mus[0] == pytest.approx(0.1) and mus[-1] == pytest.approx(100)
    assert mus[1] / mus[0] == pytest.approx(mus[2] / mus[1])


def test_repeater_simulate_columns(capsys):
    code, out, _ = run(["repeater", "--preset", "fig6", "--grid-points", "2", "--buffers", "2", "--events", "20000", "--simulate"], capsys)
    assert code == 0
    assert list(rows(out)[0]) == list(cli.REPEATER_SIM_COLUMNS)


# ---- configuration and errors ----


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# fig3 at a single buffer\ngamma = 0.05\nbuf_r=4\nbuf_e=4\ngrid_points=3\ndisc_r=FIFO-PO\n")
    _, from_file, _ = run(["analyze", "--config", str(cfg)], capsys)
    _, by_flags, _ = run(["analyze", "--gamma", "0.05", "--buf-r", "4", "--buf-e", "4", "--grid-points", "3", "--disc-r", "fifo-po"], capsys)
    assert from_file == by_flags
    _, overridden, _ = run(["analyze", "--config", str(cfg), "--gamma", "0.01"], capsys)
    _, direct, _ = run(["analyze", "--gamma", "0.01", "--buf-r", "4", "--buf-e", "4", "--grid-points", "3", "--disc-r", "fifo-po"], capsys)
    assert overridden == direct


@pytest.mark.parametrize(
    "args",
    [
        ["analyze", "--gamma", "-1"],
        ["analyze", "--grid-points", "1"],
        ["analyze", "--grid-min", "2", "--grid-max", "1"],
        ["analyze", "--disc-r", "random"],
        ["analyze", "--buf-r", "inf", "--buf-e", "inf", "--disc-r", "fifo", "--disc-e", "lifo"],
        ["analyze", "--grid-scale", "log", "--grid-min", "0"],
        ["simulate", "--events", "0"],
        ["repeater", "--sweep", "load"],
        ["analyze", "--sweep", "mu"],
        ["analyze", "--config", "/nonexistent/file.cfg"],
    ],
)
def test_invalid_input_exits_one_without_output(args, tmp_path, capsys):
    out = tmp_path / "out.csv"
    code = cli.main(args + ["-o", str(out)])
    assert code == cli.EXIT_INVALID
    assert capsys.readouterr().err.startswith("telesched: ")
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lambda=3\n")
    assert cli.main(["analyze", "--config", str(cfg)]) == cli.EXIT_INVALID


def test_failed_write_leaves_no_partial_file(tmp_path, capsys, monkeypatch):
    out = tmp_path / "out.csv"
    out.write_text("previous\n")

    def boom(*a, **k):
        raise cli.InvariantViolation("synthetic")

    monkeypatch.setattr(cli, "analyze_rows", boom)
    assert cli.main(["analyze", "-o", str(out)]) == cli.EXIT_INVARIANT
    assert out.read_text() == "previous\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.csv"]


def test_trace_subcommand(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert cli.main(["trace", "--events", "200", "--lambda-r", "4", "-o", str(out)]) == 0
    lines = out.read_text().split("\n")
    assert lines[0] == "id,kind,arrival,departure,outcome,wait,phase"
    assert len(lines) == 202


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "telesched", "analyze", "--grid-points", "2"],
        capture_output=True, text=True, env={**os.environ},
    )
    assert res.returncode == 0
    assert res.stdout.startswith("x,discipline_pair")
