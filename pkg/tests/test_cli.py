import csv
import json
import subprocess
import sys

import pytest

from horizon_fairness import domains
from horizon_fairness.cli import main
from horizon_fairness.runner import TIMESERIES_COLUMNS

SMALL = """\
scenario: small_cycle
topology: cycle
policy: ohf
horizon: 30
fairness: {alpha: 2}
seed: 5
trace: {batch_size: 10}
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def test_run_writes_outputs(small_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(small_cfg), "--out", str(out)]) == 0
    assert "outputs written" in capsys.readouterr().out
    with open(out / "timeseries.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TIMESERIES_COLUMNS
    assert len(rows) == 1 + 30 * 2
    assert rows[1][:2] == ["1", "1"] and rows[-1][:2] == ["30", "2"]
    summary = json.loads((out / "summary.json").read_text())
    for key in ("regret", "pof", "severity", "avg_utilities", "benchmark_hf", "config"):
        assert key in summary
    assert summary["invariant_violations"] == 0


def test_same_config_twice_is_byte_identical(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(small_cfg), "--out", str(a)]) == 0
    assert main(["run", str(small_cfg), "--out", str(b)]) == 0
    assert (a / "timeseries.csv").read_bytes() == (b / "timeseries.csv").read_bytes()
    c = tmp_path / "c"
    assert main(["run", str(small_cfg), "--out", str(c), "--seed", "6"]) == 0
    assert (a / "timeseries.csv").read_bytes() != (c / "timeseries.csv").read_bytes()


def test_benchmark_override_and_pareto(small_cfg, tmp_path):
    out = tmp_path / "p"
    assert main(["run", str(small_cfg), "--out", str(out), "--benchmarks", "hf,sf,util,pareto"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert "benchmark_sf" in summary and "pof_sf" in summary
    assert (out / "pareto.csv").read_text().startswith("w1,u1,u2")
    with pytest.raises(SystemExit):
        main(["run", str(small_cfg), "--benchmarks", "nope"])


def test_validate_and_presets(small_cfg, capsys):
    assert main(["validate", str(small_cfg)]) == 0
    assert "ok" in capsys.readouterr().out
    assert main(["validate", "cycle_ohf_a1"]) == 0
    assert main(["presets", "list"]) == 0
    out = capsys.readouterr().out
    assert "geant" in out and "example1_s050" in out


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL + "mystery: 1\n")
    assert main(["validate", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "bad.yaml:8: mystery: unknown key" in err
    assert main(["run", str(bad)]) == 2


def test_unwritable_output_fails_before_running(small_cfg, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(small_cfg), "--out", str(blocker / "sub")]) == 1
    assert "cannot create output directory" in capsys.readouterr().err


def test_invariant_violation_exit_code(small_cfg, tmp_path, monkeypatch, capsys):
    # a projection that forgets the capacity constraint must be caught by the per-slot checks
    orig, calls = domains.ProductDomain.project, []

    def leaky(self, y):
        calls.append(1)
        return orig(self, y) + (5.0 if len(calls) > 3 else 0.0)

    monkeypatch.setattr(domains.ProductDomain, "project", leaky)
    out = tmp_path / "v"
    assert main(["run", str(small_cfg), "--out", str(out)]) == 3
    assert "feasible set" in capsys.readouterr().err
    dump = json.loads((out / "violation.json").read_text())
    assert dump["slot"] >= 1 and "x" in dump


def test_module_entry_point(small_cfg):
    res = subprocess.run([sys.executable, "-m", "horizon_fairness", "validate", str(small_cfg)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "ok" in res.stdout
