"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (also collected
into a block at the end of the pytest run) and then asserts the criterion at
its stated tolerance and runtime budget.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from safestab import selftest
from safestab.cli import scenario_from_config
from safestab.config import loads
from safestab.scenarios import metrics, run_scenario

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


def _report(number, passed, text):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def _suite(number, results):
    passed = all(r.passed for r in results)
    text = " | ".join(f"{r.name} measured={r.measured:.6g} ({r.tolerance}, {r.seconds:.2f}s)"
                      for r in results)
    return _report(number, passed, text)


def _run_preset(fig):
    cfg = loads(fig=fig)
    sc = scenario_from_config(cfg)
    t0 = time.perf_counter()
    traj = run_scenario(sc)
    seconds = time.perf_counter() - t0
    return traj, metrics(traj, band=cfg.band), seconds


def test_criterion_01_projection_algebra():
    assert _suite(1, selftest.suite_algebra(instances=200, tol=1e-9))


@pytest.fixture(scope="module")
def scp_results():
    return selftest.suite_scp(segments=500)


@pytest.fixture(scope="module")
def reaching_results():
    return selftest.suite_reaching()


def test_criterion_02_universal_controller_admissible(scp_results):
    assert _suite(2, [r for r in scp_results if r.name.startswith("scp.universal")])


def test_criterion_03_small_control_trend(scp_results):
    assert _suite(3, [r for r in scp_results if r.name.startswith("scp.small_control")])


def test_criterion_04_reaching_law(reaching_results):
    assert _suite(4, [r for r in reaching_results if r.name.startswith("reaching.time")])


def test_criterion_05_equivalent_control_invariance(reaching_results):
    assert _suite(5, [r for r in reaching_results if r.name.startswith("reaching.equivalent")])


@pytest.fixture(scope="module")
def short_delay_runs():
    return _run_preset("1a"), _run_preset("1c")


def test_criterion_06_cruise_control_short_delay(short_delay_runs):
    (ta, ma, sa), (tb, mb, sb) = short_delay_runs
    final_b = tb.times >= tb.times[-1] - 10.0 - 1e-9
    xb = tb.states[final_b, 0]
    checks = {
        "a_safe": ma["min_h"] > 0 and not ta.aborted and ta.times[-1] >= 60.0 - 1e-9,
        "a_mean": abs(ma["x1_final_mean"] - 22.0) <= 0.5,
        "b_safe": mb["min_h"] > 0 and not tb.aborted and tb.times[-1] >= 60.0 - 1e-9,
        "b_band": bool(np.all(np.abs(xb - 22.0) <= 0.3)),
        "b_less_chattering": mb["chattering_index"] < ma["chattering_index"],
        "runtime": sa < 60.0 and sb < 60.0,
    }
    ok = all(checks.values())
    _report(6, ok, (
        f"(a) min_h={ma['min_h']:.4g} mean_x1={ma['x1_final_mean']:.4f} "
        f"chatter={ma['chattering_index']:.4g} {sa:.1f}s; "
        f"(b) min_h={mb['min_h']:.4g} x1 in [{xb.min():.4f}, {xb.max():.4f}] "
        f"chatter={mb['chattering_index']:.4g} {sb:.1f}s; failed={[k for k, v in checks.items() if not v]}"))
    assert ok, checks


def test_criterion_07_cruise_control_band_settling():
    _, ma, sa = _run_preset("2a")
    _, mc, sc = _run_preset("2c")
    checks = {
        "sign_settles_21_22": ma["settle_time"] is not None,
        "razumikhin_settles_21.6_22": mc["settle_time"] is not None,
        "safe": ma["min_h"] > 0 and mc["min_h"] > 0,
        "runtime": sa < 60.0 and sc < 60.0,
    }
    ok = all(checks.values())
    _report(7, ok, (
        f"sign K=10 settle={ma['settle_time']} residence={ma['band_residence']:.1f}s "
        f"x1 final [{ma['x1_final_min']:.4f}, {ma['x1_final_max']:.4f}] {sa:.1f}s; "
        f"razumikhin settle={mc['settle_time']} residence={mc['band_residence']:.1f}s "
        f"x1 final [{mc['x1_final_min']:.4f}, {mc['x1_final_max']:.4f}] {sc:.1f}s; "
        f"failed={[k for k, v in checks.items() if not v]}"))
    assert ok, checks


def test_criterion_08_master_slave_synchronisation():
    traj, m, seconds = _run_preset("3")
    e0, ef = m["state_norm_initial"], m["state_norm_final"]
    checks = {
        "safe": min(m["min_h_m"], m["min_h_s"]) > 0,
        "error_contracts_5x": ef <= 0.2 * e0,
        "V_decreases": m["V_final"] < m["V_initial"],
        "full_horizon": not traj.aborted and traj.times[-1] >= 40.0 - 1e-9,
        "runtime": seconds < 120.0,
    }
    ok = all(checks.values())
    _report(8, ok, (
        f"min(h_m, h_s)={min(m['min_h_m'], m['min_h_s']):.4g} |e(0)|={e0:.4g} "
        f"|e(tf)|={ef:.4g} (need <= {0.2 * e0:.4g}) V {m['V_initial']:.4g} -> {m['V_final']:.4g} "
        f"{seconds:.1f}s; failed={[k for k, v in checks.items() if not v]}"))
    assert ok, checks


def test_criterion_09_comparison_oracle():
    assert _suite(9, selftest.suite_oracle(instances=50, tol=1e-6))


def test_criterion_10_integrator():
    assert _suite(10, selftest.suite_integrator())
