"""Property suites behind ``safestab selftest`` and the acceptance tests.

Every check returns :class:`CheckResult` rows (name, status, measured value,
tolerance), printed one per line by the CLI.

Suites
------
``algebra``     projection / J-decomposition identities on random data.
``scp``         admissibility and small-control trend of the universal
                controller on the scalar benchmark ``x' = x(t - delay) + u``.
``reaching``    reaching time and slope of the sign-gain reaching law, and the
                first-order invariance of ``U`` under the equivalent control.
``oracle``      the comparison oracle on random valid instances.
``integrator``  convergence and breakpoint exactness of the delay integrator.
``all``         every suite above.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .barrier import SafeSetFunction
from .dde import integrate_closed_loop
from .errors import ContractError
from .functional import SeparableFunctional
from .history import HistorySegment
from .lyapunov import (
    CLRF_II,
    RazumikhinCertificate,
    decrease_margin,
    random_segment,
    scp_probe,
    universal_controller,
)
from .oracle import comparison_oracle, random_instance, reaching_oracle
from .smc import (
    AdditiveCombiner,
    GainSpec,
    LinearCombiner,
    SlidingSurface,
    SMCController,
    equivalent_control,
    projection_matrices,
)
from .sysmodel import ControlAffineDelaySystem, discrete_delay_system


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: str
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return (f"{self.name}\t{status}\tmeasured={self.measured:.6g}\t"
                f"tolerance={self.tolerance}\ttime={self.seconds:.2f}s{extra}")


def _timed(fn: Callable[[], Tuple[bool, float, str]], name: str, tol: str,
           budget: Optional[float] = None) -> List[CheckResult]:
    t0 = time.perf_counter()
    ok, measured, detail = fn()
    dt = time.perf_counter() - t0
    out = [CheckResult(name, ok, measured, tol, dt, detail)]
    if budget is not None:
        out.append(CheckResult(f"{name}.runtime", dt < budget, dt, f"< {budget:g} s", dt))
    return out


# ---------------------------------------------------------------------------
# algebra
# ---------------------------------------------------------------------------

IDENTITIES = ("J2_skew", "J3_symmetric", "J1_eq_minus_2J2", "Mf_eq_J1H",
              "I_minus_M_f_eq_J2_plus_J3_H", "f_eq_J3_minus_J2_H", "HJ1H_zero")


def identity_residuals(f, g, H) -> Dict[str, float]:
    """Relative residuals of the seven projection identities."""
    f = np.asarray(f, dtype=float)
    H = np.asarray(H, dtype=float)
    M, J1, J2, J3 = projection_matrices(f, g, H)
    n = f.size
    nf = max(np.linalg.norm(f), 1e-300)
    nj = max(np.linalg.norm(J1), np.linalg.norm(J3), 1e-300)
    nh = np.linalg.norm(H)
    return {
        "J2_skew": np.linalg.norm(J2 + J2.T) / nj,
        "J3_symmetric": np.linalg.norm(J3 - J3.T) / nj,
        "J1_eq_minus_2J2": np.linalg.norm(J1 + 2 * J2) / nj,
        "Mf_eq_J1H": np.linalg.norm(M @ f - J1 @ H) / nf,
        "I_minus_M_f_eq_J2_plus_J3_H": np.linalg.norm((np.eye(n) - M) @ f - (J2 + J3) @ H) / nf,
        "f_eq_J3_minus_J2_H": np.linalg.norm(f - (J3 - J2) @ H) / nf,
        "HJ1H_zero": abs(H @ J1 @ H) / max(nh * nh * nj, 1e-300),
    }


def random_projection_instance(rng: np.random.Generator, min_G: float = 1e-3):
    """Random ``(f, g, H)`` with ``n <= 5``, ``m <= 3``, ``|H g| >= min_G``."""
    while True:
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, min(3, n) + 1))
        f = rng.normal(size=n) * 10 ** rng.uniform(-2, 2)
        g = rng.normal(size=(n, m))
        H = rng.normal(size=n) * 10 ** rng.uniform(-2, 2)
        if np.linalg.norm(H @ g) >= min_G:
            return f, g, H


def suite_algebra(seed: int = 0, instances: int = 200, tol: float = 1e-9) -> List[CheckResult]:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(instances):
            res = identity_residuals(*random_projection_instance(rng))
            worst = max(worst, max(res.values()))
        return worst <= tol, worst, f"{instances} instances, 7 identities"

    return _timed(run, "algebra.identities", f"<= {tol:g} relative", budget=5.0)


# ---------------------------------------------------------------------------
# universal controller on the scalar benchmark
# ---------------------------------------------------------------------------


def scalar_benchmark(delay: float = 1.0) -> Tuple[ControlAffineDelaySystem, RazumikhinCertificate]:
    """``x' = x(t - delay) + u`` with ``V = x^2``, ``gamma(v) = v``, ``eta(v) = v/2``."""
    sys = discrete_delay_system(lambda x0, x1: x1, lambda x0, x1: np.ones((1, 1)),
                                n=1, m=1, delays=(delay,), name="x'=x(t-delay)+u")
    cert = RazumikhinCertificate(
        CLRF_II, V=lambda x: np.asarray(x)[..., 0] ** 2, grad=lambda x: 2.0 * np.asarray(x),
        gamma=lambda v: v, eta=lambda v: 0.5 * v, vectorized=True,
    )
    return sys, cert


def suite_scp(seed: int = 0, segments: int = 500, lam: float = 1.0) -> List[CheckResult]:
    sys, cert = scalar_benchmark()

    def admissible():
        rng = np.random.default_rng(seed)
        worst = -math.inf
        for _ in range(segments):
            seg = random_segment(rng, 1, 1.0, float(rng.uniform(0.01, 10.0)))
            u = universal_controller(cert, lam, sys, seg)
            worst = max(worst, decrease_margin(cert, sys, seg, u))
        return worst < 0.0, worst, f"{segments} random nonzero histories"

    def trend():
        rep = scp_probe(cert, sys, [1.0, 0.1, 0.01, 0.001], samples=200, lam=lam, seed=seed)
        ratios = rep.ratios
        bound = all(r["bound_ok"] for r in rep.rows)
        worst = min(ratios)
        ok = worst >= 5.0 and bound
        return ok, worst, "max|u| per radius: " + ", ".join(f"{r['max_u']:.3g}" for r in rep.rows) + (
            "" if bound else "; (2+sqrt(lam)) eps bound violated")

    return (_timed(admissible, "scp.universal_admissible", "max margin < 0", budget=5.0)
            + _timed(trend, "scp.small_control_trend", ">= 5x decrease per decade", budget=10.0))


# ---------------------------------------------------------------------------
# reaching law and equivalent control
# ---------------------------------------------------------------------------


def reaching_system():
    """``x' = -0.5 x + 0.3 x(t - 1) + u`` with ``U = x^2 - 5 x + 6``.

    ``U`` is the linear combination ``V - 5 h + 6`` of ``V = x^2`` and the
    zeroing safe-set function ``h = x``.
    """
    sys = discrete_delay_system(lambda x0, x1: -0.5 * x0 + 0.3 * x1,
                                lambda x0, x1: np.ones((1, 1)), n=1, m=1, delays=(1.0,),
                                name="reaching benchmark")
    lyap = RazumikhinCertificate(CLRF_II, V=lambda x: np.asarray(x)[..., 0] ** 2,
                                 grad=lambda x: 2.0 * np.asarray(x), gamma=lambda v: v,
                                 eta=lambda v: 0.5 * v, vectorized=True)
    safe = SafeSetFunction.state(lambda x: np.asarray(x)[..., 0], lambda x: np.array([1.0]),
                                 vectorized=True)
    surf = SlidingSurface(LinearCombiner(1.0, 5.0, 6.0), lyap, safe)
    return sys, surf


def start_for_surface_value(U0: float) -> float:
    """Larger root of ``x^2 - 5x + 6 = U0`` (``G = 2x - 5 > 0`` there)."""
    return 0.5 * (5.0 + math.sqrt(25.0 - 4.0 * (6.0 - U0)))


def reaching_run(K: float, U0: float, dt: float = 1e-4):
    """Simulate the sign-gain reaching phase; returns ``(t_reach, slope, t_pred)``."""
    sys, surf = reaching_system()
    ctrl = SMCController(surf, sys, GainSpec.sign(K))
    t_pred = reaching_oracle(U0, K)
    tf = dt * math.ceil(1.1 * t_pred / dt + 10)
    xi = HistorySegment.constant([start_for_surface_value(U0)], 1.0)
    traj = integrate_closed_loop(sys, ctrl, xi, dt, tf, {"U": surf.value_seg})
    absU = np.abs(traj.channel("U"))
    band = 2.0 * K * dt
    hit = np.nonzero(absU <= band)[0]
    t_reach = float(traj.times[hit[0]]) if hit.size else math.inf
    pre = traj.times < 0.9 * min(t_reach, t_pred)
    slope = float(np.polyfit(traj.times[pre], absU[pre], 1)[0]) if pre.sum() > 2 else math.nan
    return t_reach, slope, t_pred


def equivalent_control_ratio(rng: np.random.Generator, dt: float = 0.01, tf: float = 2.0,
                             margin: float = 1e-3, max_tries: int = 50):
    """``max|dU/dt|`` under the equivalent control at ``dt`` and ``dt/2``.

    A random system ``x' = A x + A_d x(t - 0.5) + 0.1 sin(x) + B u`` and a
    random quadratic surface ``U = x^T P x - 1`` are drawn until the run keeps
    ``|G| >= margin``. Returns ``(r(dt), r(dt/2))``.
    """
    for _ in range(max_tries):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, n + 1))
        A = rng.normal(size=(n, n)) * 0.5
        Ad = rng.normal(size=(n, n)) * 0.3
        Bm = rng.normal(size=(n, m))
        Q = rng.normal(size=(n, n))
        P = Q @ Q.T + 0.5 * np.eye(n)
        sys = discrete_delay_system(lambda x0, x1: A @ x0 + Ad @ x1 + 0.1 * np.sin(x0),
                                    lambda x0, x1: Bm, n=n, m=m, delays=(0.5,))
        V = SeparableFunctional(lambda x: float(x @ P @ x) - 1.0, lambda x: 2.0 * P @ x)
        surf = SlidingSurface(AdditiveCombiner(), V)
        x0 = rng.normal(size=n)
        xi = HistorySegment.from_function(lambda th: x0 * (1.0 + 0.3 * th), 0.5, num=11)
        rates = []
        for h in (dt, dt / 2):
            traj = integrate_closed_loop(
                sys, lambda seg: equivalent_control(surf, sys, seg, floor=margin), xi, h, tf,
                {"U": surf.value_seg})
            if traj.aborted:
                break
            rates.append(float(np.max(np.abs(np.diff(traj.channel("U")))) / h))
        if len(rates) == 2:
            return rates[0], rates[1]
    raise ContractError("no random system kept the transversality margin")


def suite_reaching(seed: int = 0) -> List[CheckResult]:
    out: List[CheckResult] = []

    def reaching():
        worst_t, worst_s = 0.0, 0.0
        rows = []
        for K in (1.0, 5.0, 10.0):
            for U0 in (1.0, 7.45):
                t_reach, slope, t_pred = reaching_run(K, U0)
                et = abs(t_reach - t_pred) / t_pred
                es = abs(slope + K) / K
                worst_t, worst_s = max(worst_t, et), max(worst_s, es)
                rows.append(f"K={K:g},U0={U0:g}:t={t_reach:.4f}/{t_pred:.4f},slope={slope:.4f}")
        worst = max(worst_t, worst_s)
        return worst <= 0.05, worst, "; ".join(rows)

    out += _timed(reaching, "reaching.time_and_slope", "<= 5% relative", budget=30.0)

    def invariance():
        rng = np.random.default_rng(seed)
        ratios = []
        for _ in range(10):
            r1, r2 = equivalent_control_ratio(rng)
            ratios.append(r1 / r2 if r2 > 0 else math.inf)
        ok = all(1.5 <= r <= 3.0 for r in ratios)
        worst = max(ratios, key=lambda r: abs(math.log(r / 2.0)) if r > 0 else math.inf)
        return ok, worst, "ratios " + ", ".join(f"{r:.3f}" for r in ratios)

    out += _timed(invariance, "reaching.equivalent_control_first_order", "ratio in [1.5, 3]",
                  budget=30.0)
    return out


# ---------------------------------------------------------------------------
# comparison oracle
# ---------------------------------------------------------------------------


def suite_oracle(seed: int = 0, instances: int = 50, tol: float = 1e-6) -> List[CheckResult]:
    def run():
        rng = np.random.default_rng(seed)
        worst = -math.inf
        failures = 0
        for _ in range(instances):
            rep = comparison_oracle(random_instance(rng), tol=tol)
            worst = max(worst, rep.worst_gap)
            failures += (not rep.holds) or rep.aborted
        return failures == 0, worst, f"{failures} of {instances} violated"

    return _timed(run, "oracle.comparison", f"max(X - Y) <= {tol:g}", budget=20.0)


# ---------------------------------------------------------------------------
# integrator
# ---------------------------------------------------------------------------


def _decay_error(dt: float, tf: float = 1.0) -> float:
    sys = discrete_delay_system(lambda x0: -x0, lambda x0: np.zeros((1, 1)), n=1, m=1,
                                delays=(), name="x'=-x")
    xi = HistorySegment.constant([1.0], 0.0)
    traj = integrate_closed_loop(sys, None, xi, dt, tf)
    return abs(float(traj.states[-1, 0]) - math.exp(-tf))


def suite_integrator() -> List[CheckResult]:
    out: List[CheckResult] = []

    def terminal():
        err = _decay_error(1e-3)
        return err <= 1e-6, err, "x' = -x, tf = 1, dt = 1e-3"

    def breakpoint_exact():
        sys = discrete_delay_system(lambda x0, x1: x1, lambda x0, x1: np.zeros((1, 1)), n=1, m=1,
                                    delays=(1.0,), name="x'=x(t-1)")
        traj = integrate_closed_loop(sys, None, HistorySegment.constant([1.0], 1.0), 0.01, 1.0)
        err = float(np.max(np.abs(traj.states[:, 0] - (1.0 + traj.times))))
        return err <= 1e-9, err, "x' = x(t-1), history 1, exact 1 + t on [0, 1]"

    def halving():
        ratio = _decay_error(0.1) / _decay_error(0.05)
        return ratio >= 8.0, ratio, "x' = -x error ratio dt = 0.1 vs 0.05"

    out += _timed(terminal, "integrator.terminal_error", "<= 1e-6")
    out += _timed(breakpoint_exact, "integrator.breakpoint_exact", "<= 1e-9")
    out += _timed(halving, "integrator.halving_ratio", ">= 8")
    return out


SUITES = {
    "algebra": suite_algebra,
    "scp": suite_scp,
    "reaching": suite_reaching,
    "oracle": suite_oracle,
    "integrator": lambda seed=0: suite_integrator(),
}


def run_suite(name: str, seed: int = 0) -> List[CheckResult]:
    """Run a named suite (or ``all``).

    Raises
    ------
    ContractError
        For an unknown suite name.
    """
    if name == "all":
        out: List[CheckResult] = []
        for key in SUITES:
            out += SUITES[key](seed=seed)
        return out
    if name not in SUITES:
        raise ContractError(f"unknown suite {name!r}; known: {sorted(SUITES) + ['all']}")
    return SUITES[name](seed=seed)
