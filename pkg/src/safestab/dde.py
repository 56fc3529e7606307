"""Closed-loop integration by the method of steps.

The integrator advances ``x' = f(x_t) + g(x_t) u`` with the classical
four-stage Runge-Kutta scheme on a fixed grid. Delayed arguments are read from
a cubic Hermite interpolant of the already computed solution; each step stores
the slope at both of its ends so the interpolant has the same local order as
the scheme. The controller is sampled once per step and held over it.

Choosing ``dt`` so that it divides every discrete delay puts the
delay-induced derivative jumps of the solution on grid points, which keeps the
scheme at full order; :func:`integrate_closed_loop` enforces that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, DomainError
from .history import HistorySegment
from .sysmodel import ControlAffineDelaySystem

#: States with any coordinate above this magnitude abort the run.
DIVERGENCE_THRESHOLD = 1e9

ChannelSpec = Union[Mapping[str, Callable], Sequence[Tuple[str, Callable]], None]


@dataclass
class Trajectory:
    """Sampled closed-loop solution.

    Attributes
    ----------
    times : ndarray, shape (N,)
    states : ndarray, shape (N, n)
    inputs : ndarray, shape (N, m)
        Controller output at each sample (held over the following step). The
        unclamped controller value is stored.
    channels : dict of str -> ndarray, shape (N,)
        Diagnostic functionals evaluated on the history ending at each sample.
    dt : float
    aborted : bool
        True when the run stopped early (divergence or an evaluation error).
    message : str
    diagnostics : dict
        Counters such as ``"clamped"``.
    final_segment : HistorySegment or None
        History window at the last stored time.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    channels: Dict[str, np.ndarray] = field(default_factory=dict)
    dt: float = float("nan")
    aborted: bool = False
    message: str = ""
    diagnostics: Dict[str, int] = field(default_factory=dict)
    final_segment: Optional[HistorySegment] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states.reshape(-1, 1)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs.reshape(-1, 1)
        n = self.times.shape[0]
        if self.states.shape[0] != n or self.inputs.shape[0] != n:
            raise ContractError("times, states and inputs must have equal length")
        for name, ch in self.channels.items():
            ch = np.asarray(ch, dtype=float)
            if ch.shape != (n,):
                raise ContractError(f"channel {name!r} has length {ch.shape}, expected {n}")
            self.channels[name] = ch
        if np.isnan(self.dt) and n > 1:
            self.dt = float(self.times[1] - self.times[0])

    def __len__(self) -> int:
        return self.times.shape[0]

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise ContractError(f"trajectory has no channel {name!r}") from None


def _normalize_channels(channels: ChannelSpec):
    if channels is None:
        return []
    if isinstance(channels, Mapping):
        return list(channels.items())
    return [(str(k), fn) for k, fn in channels]


def _divides(delay: float, dt: float) -> bool:
    q = delay / dt
    return abs(q - round(q)) <= 1e-9 * max(1.0, q)


def integrate_closed_loop(
    sys: ControlAffineDelaySystem,
    controller: Optional[Callable[[HistorySegment], np.ndarray]],
    xi: HistorySegment,
    dt: float,
    tf: float,
    channels: ChannelSpec = None,
    abort_on_error: bool = True,
) -> Trajectory:
    """Integrate the closed loop from the initial history ``xi``.

    Parameters
    ----------
    sys : ControlAffineDelaySystem
    controller : callable or None
        ``u = controller(seg)`` evaluated on the history at each step start and
        held constant over the step. ``None`` means ``u = 0``.
    xi : HistorySegment
        Initial history on ``[-delay, 0]``; its window must cover the system's
        delay bound.
    dt, tf : float
        Fixed step and final time. ``dt`` must divide every delay listed in
        ``sys.delays``.
    channels : mapping or sequence of (name, callable), optional
        Scalar functionals of the history recorded at every sample.
    abort_on_error : bool
        When true, :class:`DomainError` and :class:`ArithmeticError` raised by
        the controller or channels stop the run and are reported in the
        trajectory instead of propagating.

    Returns
    -------
    Trajectory
        Samples at ``t = 0, dt, ..., tf``. On divergence (any ``|x_i| > 1e9``
        or a non-finite value) the partial trajectory is returned with
        ``aborted = True``.
    """
    if not dt > 0.0:
        raise ContractError("dt must be positive")
    if tf < dt * (1.0 - 1e-12):
        raise ContractError("tf must be at least dt")
    if xi.dim != sys.n:
        raise ContractError(f"initial history has dimension {xi.dim}, system has {sys.n}")
    delay = float(sys.delay_bound)
    if xi.delay_bound < delay * (1.0 - 1e-12):
        raise ContractError("initial history is shorter than the system delay bound")
    for d in sys.delays:
        if d > 0 and not _divides(d, dt):
            raise ContractError(f"dt = {dt} does not divide the delay {d}")
    nsteps = int(round(tf / dt))
    if abs(nsteps * dt - tf) > 1e-9 * max(1.0, tf):
        raise ContractError(f"dt = {dt} does not divide tf = {tf}")

    n, m = sys.n, sys.m
    chans = _normalize_channels(channels)
    diag: Dict[str, int] = {"clamped": 0}

    # ---- buffer: initial history followed by the solution grid -----------
    if xi.is_constant:
        if delay > 0.0:
            t0 = np.array([-max(delay, xi.delay_bound), 0.0])
            x0 = np.repeat(xi._x[:1], 2, axis=0)
        else:
            t0 = np.array([0.0])
            x0 = xi._x[:1].copy()
        dl0 = np.zeros((t0.size - 1, n))
        dr0 = dl0.copy()
    else:
        t0 = xi._t - xi.time
        x0, dl0, dr0 = xi._x, xi._dl, xi._dr
    p = t0.size
    size = p + nsteps + 1  # one scratch slot for Runge-Kutta stages
    T = np.empty(size)
    X = np.empty((size, n))
    DL = np.empty((size - 1, n))
    DR = np.empty((size - 1, n))
    T[:p] = t0
    X[:p] = x0
    DL[: p - 1] = dl0
    DR[: p - 1] = dr0

    times = np.arange(nsteps + 1) * dt
    states = np.full((nsteps + 1, n), np.nan)
    inputs = np.full((nsteps + 1, m), np.nan)
    ch_vals = {name: np.full(nsteps + 1, np.nan) for name, _ in chans}

    lo = 0

    def view(head: int, t_head: float, lo_idx: int) -> HistorySegment:
        return HistorySegment._raw(
            T[lo_idx : head + 1], X[lo_idx : head + 1],
            DL[lo_idx:head], DR[lo_idx:head], t_head, delay, True,
        )

    def first_index(t_start: float, head: int, start: int) -> int:
        # largest index i >= start with T[i] <= t_start (keeps the window covered)
        i = start
        while i + 1 <= head and T[i + 1] <= t_start + 1e-12 * max(1.0, abs(t_start)):
            i += 1
        return i

    def rhs(seg: HistorySegment, u: np.ndarray) -> np.ndarray:
        return sys.f(seg) + sys.g(seg) @ u

    aborted = False
    message = ""
    last = -1
    for k in range(nsteps + 1):
        h = p - 1 + k
        t = times[k]
        lo = first_index(t - delay, h, lo)
        seg = view(h, t, lo)
        try:
            u_raw = np.zeros(m) if controller is None else np.asarray(controller(seg), dtype=float).reshape(m)
            for name, fn in chans:
                ch_vals[name][k] = float(fn(seg))
        except (DomainError, ArithmeticError) as exc:
            if not abort_on_error:
                raise
            aborted, message = True, f"evaluation error at t={t:.6g}: {exc}"
            for name, fn in chans:  # keep whatever is still defined (e.g. h after a crossing)
                try:
                    ch_vals[name][k] = float(fn(seg))
                except (DomainError, ArithmeticError):
                    pass
            states[k] = X[h]
            last = k
            break
        states[k] = X[h]
        inputs[k] = u_raw
        last = k
        if not np.all(np.isfinite(u_raw)):
            aborted, message = True, f"non-finite input at t={t:.6g}"
            break
        if k == nsteps:
            break
        u, clamped = sys.clamp(u_raw)
        if clamped:
            diag["clamped"] += 1

        xh = X[h]
        k1 = rhs(seg, u)
        # stage evaluations write a provisional head into the scratch slot
        stage = []
        kk = k1
        for c, w in ((0.5, 0.5), (0.5, 0.5), (1.0, 1.0)):
            xs = xh + (w * dt) * kk
            ts = t + c * dt
            T[h + 1] = ts
            X[h + 1] = xs
            chord = (xs - xh) / (c * dt)
            DL[h] = chord
            DR[h] = chord
            lo_s = first_index(ts - delay, h, lo)
            kk = rhs(view(h + 1, ts, lo_s), u)
            stage.append(kk)
        k2, k3, k4 = stage
        xn = xh + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(xn)) or np.max(np.abs(xn)) > DIVERGENCE_THRESHOLD:
            aborted, message = True, f"state diverged at t={times[k + 1]:.6g}"
            break
        T[h + 1] = times[k + 1]
        X[h + 1] = xn
        DL[h] = k1
        DR[h] = (xn - xh) / dt  # provisional, replaced by the end slope below
        lo_e = first_index(times[k + 1] - delay, h + 1, lo)
        DR[h] = rhs(view(h + 1, times[k + 1], lo_e), u)

    keep = slice(0, last + 1)
    hl = p - 1 + last
    final = HistorySegment._raw(
        T[lo : hl + 1].copy(), X[lo : hl + 1].copy(), DL[lo:hl].copy(), DR[lo:hl].copy(),
        times[last], delay, True,
    ) if last >= 0 else None
    traj = Trajectory(
        times=times[keep],
        states=states[keep],
        inputs=np.nan_to_num(inputs[keep], nan=0.0) if aborted else inputs[keep],
        channels={name: v[keep] for name, v in ch_vals.items()},
        dt=dt,
        aborted=aborted,
        message=message,
        diagnostics=diag,
        final_segment=final,
    )
    return traj


def dini_derivative_fd(traj: Trajectory, channel: str, t: float) -> float:
    """Forward difference ``(c(t + dt) - c(t)) / dt`` of a recorded channel.

    ``t`` is snapped to the sample at or just before it.

    Raises
    ------
    DomainError
        When ``t`` is at (or beyond) the final sample or before the first one.
    """
    c = traj.channel(channel)
    times = traj.times
    if times.size < 2:
        raise DomainError("trajectory too short for a forward difference")
    tol = 1e-9 * max(1.0, abs(t))
    k = int(np.searchsorted(times, t + tol, side="right")) - 1
    if k < 0:
        raise DomainError(f"t = {t} precedes the trajectory")
    if k >= times.size - 1:
        raise DomainError(f"t = {t} is at or after the last sample; no forward point")
    return float((c[k + 1] - c[k]) / (times[k + 1] - times[k]))
