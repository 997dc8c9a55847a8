import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from saddlekit.bench_cli import (SUMMARY_COLUMNS, TRACE_COLUMNS, fit_exponent, main,
                                 report_scaling)
from saddlekit.oracle_core import ContractError
from saddlekit.problems import generate

DEMOS = Path(__file__).resolve().parent.parent / "demos" / "configs"


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


AM_1D = """
solver = "am"
eps = 1e-6
[instance]
dims = [1, 1]
L_f = 2.0
mu_x = 2.0
"""


def test_am_one_dimensional(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(write(tmp_path, AM_1D)), "--out", str(out)]) == 0
    summary = rows(out / "summary.csv")
    assert len(summary) == 1 and summary[0]["status"] == "ok"
    assert float(summary[0]["gap"]) <= 1e-6
    trace = rows(out / "trace.csv")
    assert list(trace[0]) == TRACE_COLUMNS == ["iter", "gap", "grad_f", "grad_h", "grad_xg",
                                               "grad_yg", "prox_f", "prox_h"]
    assert list(summary[0])[:9] == SUMMARY_COLUMNS[:9]
    # summary counts equal the final ledger row of the trace
    assert summary[0]["grad_f"] == trace[-1]["grad_f"]


def test_ram_and_flag_overrides(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--config", str(write(tmp_path, AM_1D)), "--out", str(out),
                 "--solver", "ram", "--eps", "1e-8", "--seed", "3"])
    assert code == 0
    s = rows(out / "summary.csv")[0]
    assert s["solver"] == "ram" and s["seed"] == "3" and float(s["gap"]) <= 1e-8


def test_missing_instance_file(tmp_path):
    cfg = write(tmp_path, 'solver = "ram"\n[instance]\nfile = "nope.json"\n')
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()


@pytest.mark.parametrize("text", [
    'solver = "nope"\n[instance]\ndims=[1,1]\nL_f=1.0\nmu_x=1.0\n',
    'solver = "am"\neps = -1\n[instance]\ndims=[1,1]\nL_f=1.0\nmu_x=1.0\n',
    'solver = "am"\n',
    'solver = "am"\n[instance]\ndims=[2,2]\nL_f=1.0\nmu_x=2.0\n',
    'this is = = not toml',
])
def test_config_errors(tmp_path, text):
    out = tmp_path / "out"
    assert main(["run", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 2
    assert not out.exists()


def test_sweep_without_grid_is_config_error(tmp_path):
    assert main(["sweep", "--config", str(write(tmp_path, AM_1D)),
                 "--out", str(tmp_path / "o")]) == 2


def test_budget_exceeded_writes_summary(tmp_path):
    text = AM_1D.replace("[instance]", "[budget]\nmax_iter = 2\n[instance]").replace(
        "L_f = 2.0\nmu_x = 2.0", "L_f = 1.0\nmu_x = 1.0")
    out = tmp_path / "out"
    text = text.replace("dims = [1, 1]", "dims = [1, 1]\nseed = 1")
    assert main(["run", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 3
    assert rows(out / "summary.csv")[0]["status"] == "budget_exceeded"


def test_instance_file_run(tmp_path):
    inst = generate((2, 2), dict(L_f=2.0, mu_x=1.0, L_G=0.5, L_h=2.0, mu_y=1.0), 0)
    (tmp_path / "inst.json").write_text(inst.to_json())
    cfg = write(tmp_path, 'solver = "framework"\neps = 1e-5\n[instance]\nfile = "inst.json"\n')
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert float(rows(out / "summary.csv")[0]["gap"]) <= 1e-5


SWEEP = """
solver = "framework"
eps = 1e-4
[instance]
dims = [3, 3]
L_f = 1.0
mu_x = 0.1
L_G = 0.1
L_h = 0.1
mu_y = 0.1
[sweep]
param = "L_f"
values = [1.0, 4.0, 16.0]
"""


def test_sweep_rows_and_monotone_counts(tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(write(tmp_path, SWEEP)), "--out", str(out)]) == 0
    summary = rows(out / "summary.csv")
    assert [r["value"] for r in summary] == ["1.0", "4.0", "16.0"]
    counts = [int(r["grad_f"]) for r in summary]
    assert counts == sorted(counts)
    assert all(float(r["gap"]) <= 1e-4 for r in summary)
    for i in range(3):
        assert (out / f"trace_{i}_seed0.csv").is_file()
    assert (out / "timing.csv").is_file()
    assert report_scaling(out / "summary.csv", "value", "grad_f") > 0


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, SWEEP.replace("[1.0, 4.0, 16.0]", "[1.0, 4.0]"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(b)]) == 0
    for f in sorted(p.name for p in a.glob("*.csv")):
        if f != "timing.csv":
            assert (a / f).read_bytes() == (b / f).read_bytes(), f


def _summary(tmp_path, xs, ys):
    path = tmp_path / "s.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "grad_f"])
        w.writerows(zip(xs, ys))
    return path


def test_report_exact_power_law(tmp_path):
    xs = [1.0, 4.0, 16.0, 64.0]
    assert abs(report_scaling(_summary(tmp_path, xs, np.sqrt(xs)), "value", "grad_f") - 0.5) <= 1e-12


def test_report_constant(tmp_path):
    assert abs(report_scaling(_summary(tmp_path, [1, 2, 3], [7, 7, 7]), "value", "grad_f")) <= 1e-12


def test_report_degenerate_grid(tmp_path):
    with pytest.raises(ContractError):
        report_scaling(_summary(tmp_path, [1, 1, 2], [1, 2, 3]), "value", "grad_f")
    with pytest.raises(ContractError):
        fit_exponent([1, 2, 3], [1, 0, 3])
    assert main(["report", str(_summary(tmp_path, [1, 2], [1, 2]))]) == 2


def test_console_entry_point(tmp_path):
    out = tmp_path / "out"
    proc = subprocess.run([sys.executable, "-m", "saddlekit.bench_cli", "run", "--config",
                           str(DEMOS / "ram_missing.toml"), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "not found" in proc.stderr
    assert not out.exists()
    proc = subprocess.run([sys.executable, "-m", "saddlekit.bench_cli", "run", "--config",
                           str(DEMOS / "am_1d.toml"), "--out", str(out)],
                          capture_output=True, text=True, env={"SADDLEKIT_LOG": "INFO",
                                                               "PATH": "/usr/bin:/bin"})
    assert proc.returncode == 0
    assert "INFO" in proc.stderr
