"""Builders for the two worked scenarios and trajectory metrics.

Connected cruise control (CCC)
    State ``x = (v_follower, v_leader, gap)``. The follower reacts with a
    delay ``tau`` to its own resistance force ``F(v) = (a0 + a1 v + a2 v^2)/M``;
    the leader accelerates with a bounded signal ``a(t)``. The surface
    ``U = (x1 - v_d)^2 + rho ln(1 + 1/h)``, ``h = x3 - headway x1``, blends
    speed tracking with a reciprocal headway barrier.

Master-slave synchronisation
    Two planar robots with cross-coupled delayed dynamics track a circular
    reference (the slave offset by ``(1, 0)``) while avoiding the obstacle
    ``(p1^2 - 3)^2 + p2^2 < 4``. The controlled state is the tracking error
    ``e = x - reference``; the reference derivative is subtracted in the drift
    so ``e`` obeys a control-affine delay equation. The surface adds a
    Krasovskii functional of ``e`` to a soft-min of warning-region barriers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .barrier import BarrierCertificate, SafeSetFunction, membership, softmin_barrier
from .dde import Trajectory, integrate_closed_loop
from .errors import ContractError, DomainError
from .history import HistorySegment, integrate
from .lyapunov import CLRF_II, KrasovskiiCertificate, RazumikhinCertificate
from .smc import (
    TRANSVERSALITY_FLOOR,
    AdditiveCombiner,
    GainSpec,
    SlidingSurface,
    SMCController,
)
from .sysmodel import ControlAffineDelaySystem, linear

# ---------------------------------------------------------------------------
# leader acceleration profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseConstant:
    """Cyclic piecewise-constant signal ``levels[k mod len]`` on ``[k T, (k+1) T)``,
    clipped to ``[-bound, bound]``."""

    levels: Tuple[float, ...] = (2.0, 0.0, -2.0, 0.0)
    period: float = 15.0
    bound: float = 2.5

    def __call__(self, t: float) -> float:
        k = int(math.floor(t / self.period + 1e-12)) % len(self.levels)
        return max(-self.bound, min(self.bound, float(self.levels[k])))


# ---------------------------------------------------------------------------
# connected cruise control
# ---------------------------------------------------------------------------

#: Transversality floor used by the cruise-control runs. Here
#: ``G = dU/dx1`` vanishes at the speed minimising ``U`` for the current gap,
#: so the sampled law operates near ``G = 0`` for the whole run. With the
#: generic 1e-8 floor a single sample yields inputs of order 1e4 and a
#: velocity jump of several m/s; 0.05 bounds the per-step velocity change by
#: roughly ``dt * K / 0.05``.
CCC_FLOOR = 0.05


@dataclass(frozen=True)
class CCCParams:
    """Connected-cruise-control parameters (defaults: the reference parameter set)."""

    M: float = 1650.0
    a0: float = 0.1
    a1: float = 5.0
    a2: float = 0.25
    v_d: float = 22.0
    headway: float = 1.8
    rho: float = 50.0
    tau: float = 0.2
    leader_accel: Callable[[float], float] = field(default_factory=PiecewiseConstant)
    gain: GainSpec = field(default_factory=lambda: GainSpec.sign(5.0))
    xi: Tuple[float, float, float] = (18.0, 22.0, 60.0)
    dt: float = 1e-3
    tf: float = 60.0
    floor: float = CCC_FLOOR

    def resistance(self, v):
        """``F(v) = (a0 + a1 v + a2 v^2) / M``."""
        return (self.a0 + self.a1 * v + self.a2 * v * v) / self.M


@dataclass
class Scenario:
    """Everything needed to simulate a scenario."""

    name: str
    sys: ControlAffineDelaySystem
    surface: SlidingSurface
    controller: SMCController
    xi: HistorySegment
    dt: float
    tf: float
    channels: Dict[str, Callable]
    params: object
    extras: Dict[str, object] = field(default_factory=dict)


def build_ccc(p: CCCParams = CCCParams()) -> Scenario:
    """System, surface and sliding-mode controller for the cruise-control model.

    Raises
    ------
    DomainError
        If the initial history is not strictly inside the headway constraint.
    """
    tau = float(p.tau)
    F = p.resistance

    def drift(seg: HistorySegment) -> np.ndarray:
        x = seg.current
        xd = seg.eval(-tau) if tau > 0 else x
        return np.array([F(xd[0]) - F(x[0]), p.leader_accel(seg.time), x[1] - x[0]])

    g_const = np.array([[1.0], [0.0], [0.0]])
    sys = ControlAffineDelaySystem(
        n=3, m=1, delay_bound=tau, drift=drift, input_map=lambda seg: g_const,
        delays=(tau,) if tau > 0 else (), name="ccc",
    )

    def V(x):
        x = np.asarray(x)
        return (x[..., 0] - p.v_d) ** 2

    def gradV(x):
        return np.array([2.0 * (x[0] - p.v_d), 0.0, 0.0])

    lyap = RazumikhinCertificate(CLRF_II, V, gradV, gamma=lambda v: v, eta=lambda v: 0.5 * v,
                                 vectorized=True)

    def h(x):
        x = np.asarray(x)
        return x[..., 2] - p.headway * x[..., 0]

    grad_h = np.array([-p.headway, 0.0, 1.0])
    safe = SafeSetFunction.state(h, lambda x: grad_h, vectorized=True)

    def B(x):
        return math.log1p(1.0 / h(x))

    def gradB(x):
        hv = h(x)
        return -grad_h / (hv * (hv + 1.0))

    barrier = BarrierCertificate(
        "R-CBRF", safe, gamma=lambda v: v, eta=lambda v: 0.5 * v, B=B, grad_B=gradB,
        alpha1=linear(1.0),
    )

    def U_states(X):
        X = np.atleast_2d(X)
        hv = X[:, 2] - p.headway * X[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(hv > 0, np.log1p(1.0 / np.where(hv > 0, hv, 1.0)), np.inf)
        return (X[:, 0] - p.v_d) ** 2 + p.rho * b

    surface = SlidingSurface(
        AdditiveCombiner(beta=lambda b: p.rho * b, dbeta=lambda b: p.rho),
        lyap, barrier, state_value=U_states,
    )
    xi = HistorySegment.constant(np.asarray(p.xi, dtype=float), max(tau, 0.0))
    m = membership(safe, xi)
    if m.region != "interior":
        raise DomainError(f"initial history must be strictly safe; h = {m.h:.6g} ({m.region})")
    ctrl = SMCController(surface, sys, p.gain, floor=p.floor)

    channels = {
        "V": lambda seg: float(V(seg.current)),
        "B": lambda seg: B(seg.current),
        "h": lambda seg: float(h(seg.current)),
        "U": lambda seg: surface.value_seg(seg),
        "W": lambda seg: 0.5 * surface.value_seg(seg) ** 2,
        "G": lambda seg: ctrl.last.get("G", float("nan")),
    }
    return Scenario("ccc", sys, surface, ctrl, xi, p.dt, p.tf, channels, p,
                    extras={"safe_set": safe, "barrier": barrier, "lyapunov": lyap})


# ---------------------------------------------------------------------------
# master-slave synchronisation
# ---------------------------------------------------------------------------


def _diag(*v):
    return np.diag(np.asarray(v, dtype=float))


@dataclass(frozen=True)
class MasterSlaveParams:
    """Master-slave synchronisation parameters (defaults: the reference parameter set).

    ``Cmm, Cms`` weight the delayed master and slave positions in the master
    coupling term, ``Csm, Css`` those in the slave coupling term.
    """

    A_m: np.ndarray = field(default_factory=lambda: _diag(1.0, 0.3))
    A_s: np.ndarray = field(default_factory=lambda: _diag(0.7, 0.6))
    B_m: np.ndarray = field(default_factory=lambda: np.eye(2))
    B_s: np.ndarray = field(default_factory=lambda: np.eye(2))
    Cmm: np.ndarray = field(default_factory=lambda: _diag(1.0, 0.3))
    Cms: np.ndarray = field(default_factory=lambda: -0.5 * np.eye(2))
    Css: np.ndarray = field(default_factory=lambda: _diag(0.5, 0.8))
    Csm: np.ndarray = field(default_factory=lambda: -0.3 * np.eye(2))
    delta_m: float = 0.5
    delta_s: float = 0.2
    P1: np.ndarray = field(default_factory=lambda: np.eye(4))
    P2: np.ndarray = field(default_factory=lambda: np.eye(2))
    P3: np.ndarray = field(default_factory=lambda: np.eye(2))
    eps_m: float = 0.84
    eps_s: float = 0.84
    gain: GainSpec = field(default_factory=lambda: GainSpec.krasovskii(0.025))
    radius: float = 2.0
    omega: float = 0.3
    slave_offset: Tuple[float, float] = (1.0, 0.0)
    delay_law: str = "constant"
    delay_omega: float = 1.0
    literal_gate: bool = False
    xi: Tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    dt: float = 1e-3
    tf: float = 40.0
    floor: float = TRANSVERSALITY_FLOOR

    def reference(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Master and slave reference positions at time ``t``."""
        rm = np.array([self.radius * math.sin(self.omega * t),
                       self.radius * math.cos(self.omega * t)])
        return rm, rm - np.asarray(self.slave_offset, dtype=float)

    def reference_rate(self, t: float) -> np.ndarray:
        """Common time derivative of both references."""
        w = self.omega
        return np.array([self.radius * w * math.cos(w * t), -self.radius * w * math.sin(w * t)])

    def delays_at(self, t: float) -> Tuple[float, float]:
        """Master and slave delays at time ``t`` under the configured delay law."""
        if self.delay_law == "constant":
            return self.delta_m, self.delta_s
        if self.delay_law == "sinusoidal":
            s = 0.5 + 0.5 * math.sin(self.delay_omega * t)
            return self.delta_m * s, self.delta_s * s
        raise ContractError(f"unknown delay law {self.delay_law!r}")


def obstacle_h(p) -> float:
    """``(p1^2 - 3)^2 + p2^2 - 4``; negative inside the obstacle."""
    return (p[0] ** 2 - 3.0) ** 2 + p[1] ** 2 - 4.0


def obstacle_grad(p) -> np.ndarray:
    return np.array([4.0 * p[0] * (p[0] ** 2 - 3.0), 2.0 * p[1]])


class _RobotClearance:
    """Obstacle clearance of one robot, written in tracking-error coordinates.

    The position is ``e_i(0) + r_i(t)``; the explicit time dependence through
    the reference enters the derivative along solutions as an input-free term.
    """

    state_based = True

    def __init__(self, params: MasterSlaveParams, which: str):
        self.p = params
        self.idx = slice(0, 2) if which == "m" else slice(2, 4)
        self.which = which

    def position(self, seg: HistorySegment) -> np.ndarray:
        rm, rs = self.p.reference(seg.time)
        r = rm if self.which == "m" else rs
        return seg.current[self.idx] + r

    def value_seg(self, seg: HistorySegment) -> float:
        return float(obstacle_h(self.position(seg)))

    __call__ = value_seg

    def head_grad(self, seg: HistorySegment) -> np.ndarray:
        out = np.zeros(4)
        out[self.idx] = obstacle_grad(self.position(seg))
        return out

    def dplus_memory(self, seg: HistorySegment) -> float:
        return float(obstacle_grad(self.position(seg)) @ self.p.reference_rate(seg.time))


def build_master_slave(p: MasterSlaveParams = MasterSlaveParams()) -> Scenario:
    """System, surface and controller for the master-slave problem.

    Raises
    ------
    DomainError
        If either robot starts inside the obstacle.
    """
    dm, ds = float(p.delta_m), float(p.delta_s)
    bound = max(dm, ds)
    Am, As, Bm, Bs = (np.asarray(a, dtype=float) for a in (p.A_m, p.A_s, p.B_m, p.B_s))
    g_const = np.zeros((4, 4))
    g_const[:2, :2] = Bm
    g_const[2:, 2:] = Bs

    def positions(seg: HistorySegment, theta: float) -> Tuple[np.ndarray, np.ndarray]:
        e = seg.eval(theta) if theta != 0.0 else seg.current
        rm, rs = p.reference(seg.time + theta)
        return e[:2] + rm, e[2:] + rs

    def drift(seg: HistorySegment) -> np.ndarray:
        xm, xs = positions(seg, 0.0)
        tau_m, tau_s = p.delays_at(seg.time)
        xm_d, _ = positions(seg, -tau_m)
        _, xs_d = positions(seg, -tau_s)
        rdot = p.reference_rate(seg.time)
        dm_ = Am @ xm + p.Cmm @ xm_d + p.Cms @ xs_d - rdot
        ds_ = As @ xs + p.Css @ xs_d + p.Csm @ xm_d - rdot
        return np.concatenate((dm_, ds_))

    delays = (dm, ds) if p.delay_law == "constant" else ()
    sys = ControlAffineDelaySystem(
        n=4, m=4, delay_bound=bound, drift=drift, input_map=lambda seg: g_const,
        delays=tuple(d for d in delays if d > 0), name="master_slave",
    )

    P1, P2, P3 = (np.asarray(a, dtype=float) for a in (p.P1, p.P2, p.P3))

    def V1(e):
        e = np.asarray(e)
        return float(e @ P1 @ e)

    def grad1(e):
        return (P1 + P1.T) @ np.asarray(e)

    def _qm(E):
        E = np.atleast_2d(E)[:, :2]
        return np.einsum("ij,jk,ik->i", E, P2, E)

    def _qs(E):
        E = np.atleast_2d(E)[:, 2:]
        return np.einsum("ij,jk,ik->i", E, P3, E)

    def V2(seg: HistorySegment) -> float:
        out = 0.0
        if dm > 0:
            out += integrate(seg, _qm, lower=-dm, vectorized=True)
        if ds > 0:
            out += integrate(seg, _qs, lower=-ds, vectorized=True)
        return out

    def dV2(seg: HistorySegment) -> float:
        e0 = seg.current
        out = 0.0
        if dm > 0:
            out += float(_qm(e0)[0] - _qm(seg.eval(-dm))[0])
        if ds > 0:
            out += float(_qs(e0)[0] - _qs(seg.eval(-ds))[0])
        return out

    lyap = KrasovskiiCertificate(V1=V1, V2=V2, dplus_V2=dV2, gamma=lambda v: 0.025 * v,
                                 grad1=grad1)
    h_m = _RobotClearance(p, "m")
    h_s = _RobotClearance(p, "s")
    barrier = softmin_barrier([(h_s, p.eps_s), (h_m, p.eps_m)], literal_gate=p.literal_gate)
    surface = SlidingSurface(AdditiveCombiner(), lyap, barrier)

    xi = HistorySegment.constant(np.asarray(p.xi, dtype=float), bound)
    for name, part in (("master", h_m), ("slave", h_s)):
        hv = part.value_seg(xi)
        if hv <= 0:
            raise DomainError(f"{name} robot starts inside the obstacle (h = {hv:.4g})")
    ctrl = SMCController(surface, sys, p.gain, floor=p.floor)

    channels = {
        "V": lambda seg: lyap.value(seg),
        "B": lambda seg: barrier.value_seg(seg),
        "h_m": h_m.value_seg,
        "h_s": h_s.value_seg,
        "U": lambda seg: surface.value_seg(seg),
        "W": lambda seg: 0.5 * surface.value_seg(seg) ** 2,
        "e_norm": lambda seg: float(np.linalg.norm(seg.current)),
        "G": lambda seg: ctrl.last.get("G", float("nan")),
    }
    return Scenario("master_slave", sys, surface, ctrl, xi, p.dt, p.tf, channels, p,
                    extras={"barrier": barrier, "lyapunov": lyap, "h_m": h_m, "h_s": h_s})


# ---------------------------------------------------------------------------
# scalar benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarParams:
    """Scalar benchmark ``x' = a x + b x(t - delay) + u``.

    The surface is ``x^2`` alone, or ``x^2 + rho ln(1 + 1/(limit - x))``
    when ``limit`` is given (safe set ``x < limit``). As in the cruise-control
    model the barrier term moves the minimiser of ``U`` off zero, where
    ``G`` vanishes, hence the same transversality floor.
    """

    a: float = 0.0
    b: float = 1.0
    delay: float = 1.0
    xi: float = 1.0
    limit: Optional[float] = None
    rho: float = 1.0
    gain: GainSpec = field(default_factory=lambda: GainSpec.sign(1.0))
    dt: float = 1e-3
    tf: float = 10.0
    floor: float = CCC_FLOOR


def build_scalar(p: ScalarParams = ScalarParams()) -> Scenario:
    """System, surface and controller for the scalar benchmark."""
    d = float(p.delay)

    def drift(seg: HistorySegment) -> np.ndarray:
        x = seg.current
        xd = seg.eval(-d) if d > 0 else x
        return p.a * x + p.b * xd

    sys = ControlAffineDelaySystem(
        n=1, m=1, delay_bound=d, drift=drift, input_map=lambda seg: np.ones((1, 1)),
        delays=(d,) if d > 0 else (), name="scalar",
    )
    lyap = RazumikhinCertificate(CLRF_II, lambda x: np.asarray(x)[..., 0] ** 2,
                                 lambda x: 2.0 * np.asarray(x, dtype=float),
                                 gamma=lambda v: v, eta=lambda v: 0.5 * v, vectorized=True)
    barrier = None
    if p.limit is not None:
        lim = float(p.limit)
        safe = SafeSetFunction.state(lambda x: lim - np.asarray(x)[..., 0],
                                     lambda x: np.array([-1.0]), vectorized=True)
        barrier = BarrierCertificate(
            "R-CBRF", safe, gamma=lambda v: v, eta=lambda v: 0.5 * v,
            B=lambda x: math.log1p(1.0 / (lim - float(x[0]))),
            grad_B=lambda x: np.array([1.0 / ((lim - x[0]) * (lim - x[0] + 1.0))]),
        )
        if membership(safe, np.array([p.xi])).region != "interior":
            raise DomainError("initial state must satisfy x < limit")
    combiner = AdditiveCombiner(beta=lambda b: p.rho * b, dbeta=lambda b: p.rho)
    surface = SlidingSurface(combiner, lyap, barrier)
    xi = HistorySegment.constant(np.array([float(p.xi)]), d)
    ctrl = SMCController(surface, sys, p.gain, floor=p.floor)
    channels = {
        "V": lambda seg: float(seg.current[0] ** 2),
        "U": lambda seg: surface.value_seg(seg),
        "W": lambda seg: 0.5 * surface.value_seg(seg) ** 2,
        "G": lambda seg: ctrl.last.get("G", float("nan")),
    }
    if p.limit is not None:
        channels["h"] = lambda seg: float(p.limit - seg.current[0])
    return Scenario("scalar", sys, surface, ctrl, xi, p.dt, p.tf, channels, p)


# ---------------------------------------------------------------------------
# running and metrics
# ---------------------------------------------------------------------------


def run_scenario(sc: Scenario, channels: Optional[Sequence[str]] = None,
                 dt: Optional[float] = None, tf: Optional[float] = None) -> Trajectory:
    """Integrate a built scenario, recording the selected channels (default all)."""
    names = list(sc.channels) if channels is None else list(channels)
    missing = [c for c in names if c not in sc.channels]
    if missing:
        raise ContractError(f"unknown channels {missing}; available: {sorted(sc.channels)}")
    chans = [(c, sc.channels[c]) for c in names]
    return integrate_closed_loop(sc.sys, sc.controller, sc.xi, dt or sc.dt, tf or sc.tf, chans)


def _final_window(traj: Trajectory, window: float) -> slice:
    t_end = traj.times[-1]
    k = int(np.searchsorted(traj.times, t_end - window - 1e-9, side="left"))
    return slice(k, None)


def settle_time(times: np.ndarray, signal: np.ndarray, band: Tuple[float, float],
                residence: float = 10.0) -> Optional[float]:
    """Start of the final stretch inside ``band`` if it lasts at least ``residence``.

    Returns ``None`` when the signal ends outside the band or the final stretch
    is shorter than ``residence``.
    """
    lo, hi = band
    inside = (signal >= lo) & (signal <= hi)
    if inside.size == 0 or not inside[-1]:
        return None
    out = np.nonzero(~inside)[0]
    start = 0 if out.size == 0 else out[-1] + 1
    t0 = float(times[start])
    return t0 if times[-1] - t0 >= residence - 1e-9 else None


def chattering_index(inputs: np.ndarray) -> float:
    """Total variation ``sum_k |u(k+1) - u(k)|`` (1-norm over input components)."""
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(u, axis=0))))


def metrics(traj: Trajectory, band: Optional[Tuple[float, float]] = None,
            final_window: float = 10.0, band_state: int = 0,
            residence: float = 10.0) -> Dict[str, object]:
    """Scalar summary of a scenario run.

    Keys: ``min_<h-channel>`` for each ``h`` / ``h_*`` channel and their
    minimum ``min_h_all``,
    ``chattering_index`` (final window), ``x<i>_final_mean`` /
    ``x<i>_final_min`` / ``x<i>_final_max`` for the band state,
    ``V_initial`` / ``V_final`` / ``V_decreased`` when a ``V`` channel exists,
    and with a band ``settle_time`` and ``band_residence`` (time spent in the
    band).

    Raises
    ------
    ContractError
        When the trajectory has no samples or records no channels.
    """
    if len(traj) == 0 or not traj.channels:
        raise ContractError("metrics need a non-empty trajectory with recorded channels")
    hs = [c for c in traj.channels if c == "h" or c.startswith("h_")]
    out: Dict[str, object] = {}
    for c in hs:
        out[f"min_{c}"] = float(np.nanmin(traj.channels[c])) if np.any(
            np.isfinite(traj.channels[c])) else float("nan")
    if hs:
        out["min_h_all"] = float(np.nanmin([out[f"min_{c}"] for c in hs])) if any(
            np.isfinite(out[f"min_{c}"]) for c in hs) else float("nan")
    w = _final_window(traj, final_window)
    out["chattering_index"] = chattering_index(traj.inputs[w])
    xs = traj.states[:, band_state]
    out[f"x{band_state + 1}_final_mean"] = float(np.mean(xs[w]))
    out[f"x{band_state + 1}_final_min"] = float(np.min(xs[w]))
    out[f"x{band_state + 1}_final_max"] = float(np.max(xs[w]))
    if "V" in traj.channels:
        v = traj.channels["V"]
        out["V_initial"] = float(v[0])
        out["V_final"] = float(v[-1])
        out["V_decreased"] = bool(v[-1] < v[0])  # False when the final sample is undefined
    if band is not None:
        st = settle_time(traj.times, xs, band, residence)
        out["settle_time"] = st
        inside = (xs >= band[0]) & (xs <= band[1])
        out["band_residence"] = float(np.sum(inside[:-1]) * traj.dt) if len(traj) > 1 else 0.0
    e = np.linalg.norm(traj.states, axis=1)
    out["state_norm_initial"] = float(e[0])
    out["state_norm_final"] = float(e[-1])
    out["aborted"] = traj.aborted
    return out
