from __future__ import annotations

import math

import numpy as np
import pytest

import conav.commplanner as cp
from conav.cli import main
from conav.harness import (format_log, parse_log_trajectories, run_batch, run_trial,
                           summarize, summary_to_tsv)
from conav.metrics import normalized_speed, proximity_cost
from conav.safety import SafetyParams
from conav.world import builtin_scenario

P = SafetyParams(epsilon_tube=0.1, r_h=0.3, r_r=0.3)


def test_proximity_cost_examples():
    assert math.isinf(proximity_cost([(0, 0)], [(0.5, 0)], P))
    assert proximity_cost([(0, 0), (1, 0)], [(0, 10), (1, 10)], P) == 0.0
    # B = 0.5 and B = 1.5 would need thresh above 1.5 to count both
    r = [(0, 0), (0, 0)]
    h = [(math.sqrt(0.49 + 0.5), 0), (math.sqrt(0.49 + 1.5), 0)]
    assert proximity_cost(r, h, P, thresh=2.0) == pytest.approx(0.5)


def test_normalized_speed_examples():
    assert normalized_speed(5, 5, 1) == 1.0
    assert normalized_speed(5, 10, 1) == 0.5
    assert normalized_speed(5, 4, 1) == 1.25
    with pytest.raises(ValueError):
        normalized_speed(5, 0, 1)


@pytest.fixture(scope="module")
def trial():
    return run_trial(builtin_scenario("basic"), 2)


def test_report_fields(trial):
    ep, rep = trial
    assert rep.outcome == "GOAL" and rep.method == "full"
    assert 0 < rep.rns <= 1 and not rep.rns_anomalous
    assert rep.pi == ep.pi and rep.steps == len(ep.steps) - 1


def test_pc_recomputed_from_log(trial):
    ep, rep = trial
    text = format_log(ep)
    r, h = parse_log_trajectories(text)
    assert np.array_equal(r, ep.robot_xy)
    pc = proximity_cost(r, h, SafetyParams.from_scenario(ep.scenario))
    assert pc == rep.pc
    assert text.splitlines()[0].startswith("# conav-log v1 scenario=")
    assert text.rstrip().endswith(f"pi={ep.pi}")


def test_log_barrier_matches_recorded_tube(trial):
    ep, _ = trial
    lines = [ln.split() for ln in format_log(ep).splitlines() if ln.startswith("S ")]
    assert len(lines) == len(ep.steps)
    for f, s in zip(lines[1:], ep.steps[1:]):
        assert float(f[11]) == s.barrier


def test_baseline_never_consults_sensor(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("sensor consulted")
    monkeypatch.setattr(cp, "observe", boom)
    monkeypatch.setattr(cp, "update_belief", boom)
    _, rep = run_trial(builtin_scenario("basic"), 0, "baseline")
    assert rep.signals_sent == 0


def test_batch_table_and_ranges():
    res = run_batch([builtin_scenario("basic")], [0, 1], methods=("full",), sweep_f=(0.0, 1.0))
    assert len(res.reports) == 4 and not res.errors
    for row in summarize(res.reports):
        rows = res.rows(row["map_id"], row["method"], row["f_priority"])
        for key in ("rns", "pi", "pc"):
            vals = [getattr(r, key) for r in rows if getattr(r, key) is not None]
            if row[key] is not None:
                lo, hi = row[key]
                assert all(lo <= v <= hi for v in vals)
    assert summary_to_tsv(summarize(res.reports)).count("\n") == 3


def test_empty_seed_list():
    res = run_batch([builtin_scenario("basic")], [])
    assert res.reports == [] and summarize(res.reports) == []


def test_batch_records_failures():
    with pytest.raises(ValueError):
        run_trial(builtin_scenario("basic"), 0, "teleport")
    res = run_batch([builtin_scenario("basic")], [0], methods=("teleport",))
    assert res.reports == [] and len(res.errors) == 1


def test_cli_run_and_verify(tmp_path, capsys):
    out = tmp_path / "run.log"
    assert main(["run", "--scenario", "basic", "--seed", "3", "--out", str(out)]) == 0
    assert "basic\tfull\t3" in capsys.readouterr().out
    assert out.read_text().startswith("# conav-log v1")
    assert main(["verify"]) == 0
    assert capsys.readouterr().out.count("PASS") == 3


def test_cli_batch(tmp_path, capsys):
    assert main(["batch", "--scenarios", "basic", "--seeds", "0-1", "--methods", "full",
                 "--sweep-f", "1", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "summary.tsv").exists()
    assert len((tmp_path / "trials.tsv").read_text().splitlines()) == 3
    assert len(list((tmp_path / "logs").iterdir())) == 2
    assert "basic\tfull\t1\t2\t" in capsys.readouterr().out

