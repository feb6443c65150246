import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from iiorbit import cli
from iiorbit.config import demo_config
from iiorbit.simcore import read_csv


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _summary(text):
    return dict(line.split(" = ", 1) for line in text.splitlines() if " = " in line)


def test_demo_writes_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "f.csv"
    code, text, _ = run(["demo", "furuta", "--t-end", "20", "--out", str(out)], capsys)
    assert code == cli.EXIT_OK
    data = read_csv(out)
    assert data["t"][-1] == 20.0
    summary = _summary((tmp_path / "f.summary.txt").read_text())
    assert summary["orbit"] == "periodic"
    assert float(summary["period"]) == pytest.approx(1.4931, abs=2e-3)
    assert _summary(text)["status"] == "ok"


def test_pendubot_demo_reports_rotation(capsys):
    code, text, _ = run(["demo", "pendubot", "--t-end", "15"], capsys)
    assert code == cli.EXIT_OK
    assert _summary(text)["orbit"].startswith("rotation")


def test_degenerate_initial_state(capsys):
    code, text, _ = run(["simulate", "--demo", "furuta", "--x0", "0,0,0,0", "--t-end", "5"], capsys)
    assert code == cli.EXIT_OK
    assert "degenerate point orbit" in _summary(text)["orbit"]


def test_singular_run_exit_code(tmp_path, capsys):
    cfg = tmp_path / "sing.ini"
    cfg.write_text(
        "[system]\nname = pendubot\n[synthesis]\nk2 = 3\ninterval = -2, 2\n"
        "[initial]\nx0 = 1, 0, 0, 0\n[integrator]\nt_end = 10\n"
    )
    code, text, err = run(["simulate", "--config", str(cfg)], capsys)
    assert code == cli.EXIT_SINGULAR
    assert "singular" in err
    assert _summary(text)["orbit"] == "aborted at a control singularity"


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--demo", "furuta", "--gamma1", "-1"],
        ["simulate", "--demo", "furuta", "--x0", "1,2"],
        ["simulate", "--config", "/nonexistent.ini"],
        ["simulate"],
        ["simulate", "--demo", "furuta", "--bogus"],
        ["sweep", "--demo", "furuta", "--axis", "gamma-pairs", "--values", "5"],
        ["plotdata", "/nonexistent.csv"],
    ],
)
def test_config_errors_exit_3(argv, capsys):
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == cli.EXIT_CONFIG


def test_plotdata_decimates(tmp_path, capsys):
    src = tmp_path / "run.csv"
    assert cli.main(["demo", "furuta", "--t-end", "30", "--method", "rk4", "--h", "0.001", "--out", str(src)]) == 0
    assert len(read_csv(src)["t"]) > 5000
    code, _, _ = run(["plotdata", str(src), "--kind", "timeseries", "--out", str(tmp_path / "p")], capsys)
    assert code == 0
    ts = np.loadtxt(tmp_path / "p_timeseries.csv", delimiter=",", skiprows=1)
    assert 2 <= len(ts) <= 5000
    full = read_csv(src)
    # min-max decimation keeps the extremes of every column
    assert ts[:, 1].max() == full["x1"].max() and ts[:, 1].min() == full["x1"].min()
    assert np.all(np.diff(ts[:, 0]) > 0)
    code, _, _ = run(["plotdata", str(src), "--kind", "phase", "--out", str(tmp_path / "p")], capsys)
    for tag in ("u", "a"):
        assert len(np.loadtxt(tmp_path / f"p_phase_{tag}.csv", delimiter=",", skiprows=1)) <= 5000


def test_plotdata_rejects_empty_csv(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("t,x1,x2,x3,x4,z1,z2,u,Hx\n")
    code, _, err = run(["plotdata", str(p)], capsys)
    assert code == cli.EXIT_CONFIG and "no data" in err


def test_minmax_decimate_small_input():
    y = np.arange(10.0)
    assert np.array_equal(cli.minmax_decimate(y, 5000), np.arange(10))


def test_sweep_independent_of_job_count(monkeypatch):
    base = demo_config("furuta").with_integrator(t_end=8.0)
    values = ["5,5", "20,2", "1,1"]
    monkeypatch.setenv("IIORBIT_JOBS", "1")
    serial = cli.format_sweep(cli.run_sweep(base, "gamma-pairs", values))
    monkeypatch.setenv("IIORBIT_JOBS", "2")
    parallel = cli.format_sweep(cli.run_sweep(base, "gamma-pairs", values))
    assert serial == parallel
    rows = list(csv.DictReader(io.StringIO(serial)))
    assert [r["value"] for r in rows] == values


def test_jobs_from_env(monkeypatch):
    monkeypatch.setenv("IIORBIT_JOBS", "3")
    assert cli.jobs_from_env() == 3
    monkeypatch.setenv("IIORBIT_JOBS", "zero")
    with pytest.raises(cli.ConfigError):
        cli.jobs_from_env()


def test_sweep_writes_table(tmp_path, capsys):
    table = tmp_path / "sweep.csv"
    code, text, _ = run(
        ["sweep", "--demo", "furuta", "--t-end", "6", "--axis", "k-parameter", "--values", "5", "9", "--out", str(table)],
        capsys,
    )
    assert code == 0
    assert table.read_text() == text
    assert (tmp_path / "sweep_run_000.csv").is_file() and (tmp_path / "sweep_run_001.csv").is_file()


def test_verify_pass_and_mutation(tmp_path, capsys):
    code, text, _ = run(["verify", "--demo", "furuta", "--t-end", "20", "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK and "verdict: PASS" in text
    assert (tmp_path / "certificate.txt").read_text() == text
    assert (tmp_path / "certificate.csv").is_file()
    code, text, _ = run(["verify", "--demo", "furuta", "--t-end", "20", "--slope-factor", "1.01"], capsys)
    assert code == cli.EXIT_FAIL and "verdict: FAIL" in text


def test_d4_report():
    text = cli.d4_report()
    assert "1.78485358" in text and "unbounded growth" in text


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "iiorbit.cli", "verify", "--demo", "furuta", "--gamma1", "0"],
                         capture_output=True, text=True)
    assert res.returncode == 3
