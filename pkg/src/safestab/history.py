"""History segments: sampled functions on the trailing window ``[-delay, 0]``.

A :class:`HistorySegment` stores samples of a continuous function
``phi: [-delay_bound, 0] -> R^n`` and interpolates between them. Between two
samples the interpolant is a cubic Hermite polynomial when slope data is known
(the integrator always supplies it) and the straight chord otherwise. Slopes
are stored per interval, one at each end, so derivative jumps at grid points
(delay-induced breakpoints) are represented exactly.

Suprema over the window are approximated on a finite grid: the stored sample
points plus ``refine`` equally spaced sub-points per sample gap.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ContinuityError, ContractError, DomainError

#: Default number of sub-intervals per sample gap used for window suprema.
DEFAULT_REFINE = 4

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

#: Relative slack accepted when checking that ``theta`` lies in the window.
_THETA_TOL = 1e-9


class HistorySegment:
    """An immutable sampled history ``phi`` on ``[-delay_bound, 0]``.

    Parameters
    ----------
    thetas : sequence of float
        Strictly increasing sample offsets. The first must equal
        ``-delay_bound`` and the last must be ``0``. A single sample denotes a
        constant history.
    values : array_like, shape (N, n) or (N,)
        Sample values. One-dimensional input is read as a scalar history.
    delay_bound : float, optional
        Window length. Inferred as ``-thetas[0]`` when omitted; required for a
        single-sample (constant) history.
    derivatives : array_like, shape (N, n), optional
        Time derivative at each sample. Enables Hermite interpolation; chord
        interpolation is used when omitted.
    time : float, default 0.0
        Absolute time corresponding to ``theta = 0``. Time-varying functionals
        (e.g. tracking references) read it.
    """

    __slots__ = ("_t", "_x", "_dl", "_dr", "time", "delay_bound", "hermite")

    def __init__(
        self,
        thetas: Sequence[float],
        values,
        delay_bound: Optional[float] = None,
        derivatives=None,
        time: float = 0.0,
    ):
        th = np.atleast_1d(np.asarray(thetas, dtype=float))
        x = np.asarray(values, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if th.size > 1 or x.size == 1 else x.reshape(1, -1)
        if x.ndim != 2 or x.shape[0] != th.size:
            raise ContractError(
                f"values must have one row per theta; got {x.shape} for {th.size} thetas"
            )
        if th.size == 0:
            raise ContractError("a history needs at least one sample")
        if th.size == 1:
            if delay_bound is None:
                raise ContractError("a constant history needs an explicit delay_bound")
            if abs(th[0]) > _THETA_TOL:
                raise ContractError("a single-sample history must sit at theta = 0")
            delay = float(delay_bound)
        else:
            if np.any(np.diff(th) <= 0.0):
                raise ContractError("thetas must be strictly increasing")
            delay = float(-th[0]) if delay_bound is None else float(delay_bound)
            scale = max(1.0, delay)
            if abs(th[-1]) > _THETA_TOL * scale:
                raise ContractError("the last theta must be 0")
            if abs(th[0] + delay) > _THETA_TOL * scale:
                raise ContractError("the first theta must equal -delay_bound")
        if delay < 0.0:
            raise ContractError("delay_bound must be nonnegative")
        if not np.all(np.isfinite(x)):
            raise ContractError("history values must be finite")

        self.time = float(time)
        self.delay_bound = delay
        self._t = th + self.time
        self._x = x
        if th.size == 1:
            self._dl = np.zeros((0, x.shape[1]))
            self._dr = self._dl
            self.hermite = False
        elif derivatives is None:
            chord = np.diff(x, axis=0) / np.diff(th)[:, None]
            self._dl = chord
            self._dr = chord
            self.hermite = False
        else:
            d = np.asarray(derivatives, dtype=float).reshape(x.shape)
            self._dl = d[:-1].copy()
            self._dr = d[1:].copy()
            self.hermite = True

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------
    @classmethod
    def constant(cls, value, delay_bound: float, time: float = 0.0) -> "HistorySegment":
        """Return the constant history ``phi(theta) = value``."""
        v = np.atleast_1d(np.asarray(value, dtype=float)).reshape(1, -1)
        return cls([0.0], v, delay_bound=delay_bound, time=time)

    @classmethod
    def from_function(
        cls,
        fn: Callable[[float], Sequence[float]],
        delay_bound: float,
        num: int = 101,
        time: float = 0.0,
        derivative: Optional[Callable[[float], Sequence[float]]] = None,
    ) -> "HistorySegment":
        """Sample ``fn(theta)`` on ``num`` equally spaced points of the window."""
        th = np.linspace(-delay_bound, 0.0, num)
        vals = np.array([np.atleast_1d(fn(t)) for t in th], dtype=float)
        ders = None
        if derivative is not None:
            ders = np.array([np.atleast_1d(derivative(t)) for t in th], dtype=float)
        return cls(th, vals, delay_bound=delay_bound, derivatives=ders, time=time)

    @classmethod
    def _raw(cls, times, values, dleft, dright, time, delay_bound, hermite=True):
        """Wrap preallocated arrays without validation (integrator fast path).

        ``times`` are absolute and may start before ``time - delay_bound``.
        """
        obj = cls.__new__(cls)
        obj._t = times
        obj._x = values
        obj._dl = dleft
        obj._dr = dright
        obj.time = float(time)
        obj.delay_bound = float(delay_bound)
        obj.hermite = hermite
        return obj

    # ------------------------------------------------------------------
    # basic accessors
    # ------------------------------------------------------------------
    @property
    def dim(self) -> int:
        """State dimension ``n``."""
        return self._x.shape[1]

    @property
    def is_constant(self) -> bool:
        """True for a single-sample history."""
        return self._t.shape[0] == 1

    @property
    def thetas(self) -> np.ndarray:
        """Sample offsets, starting at ``-delay_bound`` and ending at ``0``."""
        return self.grid(refine=1)

    @property
    def values(self) -> np.ndarray:
        """Values at :attr:`thetas`, shape ``(len(thetas), n)``."""
        return self.eval_many(self.thetas)

    @property
    def current(self) -> np.ndarray:
        """The head value ``phi(0)``."""
        return self._x[-1].copy()

    def _check_theta(self, theta: float) -> None:
        scale = max(1.0, self.delay_bound)
        if theta > _THETA_TOL * scale or theta < -self.delay_bound - _THETA_TOL * scale:
            raise DomainError(
                f"theta = {theta!r} outside the window [-{self.delay_bound}, 0]"
            )

    def eval(self, theta: float) -> np.ndarray:
        """Value ``phi(theta)``; raises :class:`DomainError` outside the window."""
        theta = float(theta)
        self._check_theta(theta)
        if self._t.shape[0] == 1:
            return self._x[0].copy()
        return _kernels.hermite_one(self._t, self._x, self._dl, self._dr, self.time + theta)

    __call__ = eval

    def eval_many(self, thetas) -> np.ndarray:
        """Vectorised :meth:`eval`; returns shape ``(len(thetas), n)``."""
        th = np.atleast_1d(np.asarray(thetas, dtype=float))
        if th.size:
            self._check_theta(float(th.min()))
            self._check_theta(float(th.max()))
        if self._t.shape[0] == 1:
            return np.repeat(self._x[:1], th.size, axis=0)
        return _kernels.hermite_many(self._t, self._x, self._dl, self._dr, self.time + th)

    def derivative(self, theta: float) -> np.ndarray:
        """Slope of the interpolant at ``theta`` (right-continuous at samples)."""
        theta = float(theta)
        self._check_theta(theta)
        if self._t.shape[0] == 1:
            return np.zeros(self.dim)
        return _kernels.hermite_deriv_many(
            self._t, self._x, self._dl, self._dr, np.array([self.time + theta])
        )[0]

    def grid(self, refine: int = DEFAULT_REFINE) -> np.ndarray:
        """Offsets used for window suprema: samples plus ``refine`` sub-points per gap."""
        if self._t.shape[0] == 1:
            return np.zeros(1)
        th = self._t - self.time
        lo = -self.delay_bound
        inner = th[th > lo + _THETA_TOL * max(1.0, self.delay_bound)]
        base = np.concatenate(([lo], inner))
        base[-1] = min(base[-1], 0.0)
        refine = max(1, int(refine))
        if refine == 1 or base.size == 1:
            return base
        w = np.arange(refine) / refine
        fine = (base[:-1, None] + np.diff(base)[:, None] * w[None, :]).ravel()
        return np.concatenate((fine, base[-1:]))

    def __repr__(self) -> str:
        kind = "constant" if self.is_constant else f"{self._t.shape[0]} samples"
        return (
            f"HistorySegment(n={self.dim}, delay_bound={self.delay_bound}, "
            f"time={self.time}, {kind})"
        )


def eval(seg: HistorySegment, theta: float) -> np.ndarray:  # noqa: A001 - mirrors the method
    """Module-level alias of :meth:`HistorySegment.eval`."""
    return seg.eval(theta)


def sup_norm(seg: HistorySegment, refine: int = DEFAULT_REFINE) -> float:
    """Approximate ``sup_theta |phi(theta)|`` (Euclidean norm) on the window grid.

    The stored samples are always part of the grid, so the result dominates the
    norm of every sample.
    """
    pts = seg.eval_many(seg.grid(refine))
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", pts, pts))))


def sup_transform(
    seg: HistorySegment,
    scalar_map: Callable,
    refine: int = DEFAULT_REFINE,
    vectorized: bool = False,
) -> float:
    """Approximate ``sup_theta scalar_map(phi(theta))`` on the window grid.

    Parameters
    ----------
    seg : HistorySegment
    scalar_map : callable
        Map from a state vector to a float. With ``vectorized=True`` it must
        accept an ``(k, n)`` array and return ``k`` values.
    refine : int
        Sub-intervals per sample gap; ``1`` uses the stored samples only.
    vectorized : bool
        Whether ``scalar_map`` operates on stacked states.
    """
    pts = seg.eval_many(seg.grid(refine))
    if vectorized:
        return float(np.max(np.asarray(scalar_map(pts), dtype=float)))
    return float(max(float(scalar_map(p)) for p in pts))


def integrate(
    seg: HistorySegment,
    integrand: Callable,
    lower: Optional[float] = None,
    vectorized: bool = False,
) -> float:
    """Composite trapezoid rule for ``int_{lower}^{0} integrand(phi(theta)) dtheta``.

    The quadrature nodes are the stored samples (plus ``lower`` itself). A
    constant history is integrated exactly.
    """
    lo = -seg.delay_bound if lower is None else float(lower)
    if lo > 0.0 or lo < -seg.delay_bound * (1.0 + _THETA_TOL) - _THETA_TOL:
        raise DomainError(f"lower limit {lo} outside the window")
    if seg.is_constant:
        v = integrand(seg._x) if vectorized else [integrand(seg._x[0])]
        return float(np.asarray(v, dtype=float).ravel()[0]) * (-lo)
    th = seg._t - seg.time
    inner = th[th > lo + 1e-12 * max(1.0, seg.delay_bound)]
    nodes = np.concatenate(([lo], inner))
    if nodes.size == 1:
        return 0.0
    pts = seg.eval_many(nodes)
    if vectorized:
        q = np.asarray(integrand(pts), dtype=float)
    else:
        q = np.array([float(integrand(p)) for p in pts])
    return float(_trapezoid(q, nodes))


def advance(seg: HistorySegment, new_tail) -> HistorySegment:
    """Slide the window forward by appending samples after ``theta = 0``.

    Parameters
    ----------
    seg : HistorySegment
        The current window.
    new_tail : sequence of (theta, value)
        Offsets relative to the *current* head, strictly increasing and > 0.

    Returns
    -------
    HistorySegment
        A segment spanning ``[-delay_bound, 0]`` relative to the last appended
        time. Samples that fall out of the window are dropped; a sample is
        interpolated at the new window start when it falls between samples.
        New intervals use chord interpolation.

    Raises
    ------
    ContinuityError
        When the first appended point lies more than ``delay_bound`` after the
        current head, so the new window would not overlap the old one.
    """
    tail = list(new_tail)
    if not tail:
        return seg
    offs = np.array([float(t) for t, _ in tail])
    vals = np.array([np.atleast_1d(np.asarray(v, dtype=float)) for _, v in tail])
    if vals.ndim != 2 or vals.shape[1] != seg.dim:
        raise ContractError("tail values must match the segment dimension")
    if offs[0] <= 0.0 or np.any(np.diff(offs) <= 0.0):
        raise ContractError("tail offsets must be positive and strictly increasing")
    if offs[0] > seg.delay_bound + _THETA_TOL * max(1.0, seg.delay_bound):
        raise ContinuityError(
            f"first appended offset {offs[0]} leaves a gap larger than the window "
            f"({seg.delay_bound})"
        )
    delay = seg.delay_bound
    new_time = seg.time + offs[-1]

    if seg.is_constant:
        # expand the constant history into an explicit two-point start
        old_t = np.array([seg.time - delay, seg.time]) if delay > 0 else np.array([seg.time])
        old_x = np.repeat(seg._x[:1], old_t.size, axis=0)
        old_dl = np.zeros((old_t.size - 1, seg.dim))
        old_dr = old_dl
    else:
        old_t, old_x, old_dl, old_dr = seg._t, seg._x, seg._dl, seg._dr

    t_all = np.concatenate((old_t, seg.time + offs))
    x_all = np.concatenate((old_x, vals), axis=0)
    prev = np.concatenate((old_x[-1:], vals[:-1]), axis=0)
    prev_t = np.concatenate(([seg.time], seg.time + offs[:-1]))
    chord = (vals - prev) / (seg.time + offs - prev_t)[:, None]
    dl_all = np.concatenate((old_dl, chord), axis=0)
    dr_all = np.concatenate((old_dr, chord), axis=0)

    start = new_time - delay
    tol = _THETA_TOL * max(1.0, delay)
    if delay == 0.0:
        keep = slice(t_all.size - 1, None)
        return HistorySegment._raw(
            t_all[keep], x_all[keep], np.zeros((0, seg.dim)), np.zeros((0, seg.dim)),
            new_time, delay, hermite=False,
        )
    # index of the first sample at or after the window start
    j = int(np.searchsorted(t_all, start - tol, side="left"))
    if abs(t_all[j] - start) <= tol:
        t_new = t_all[j:].copy()
        t_new[0] = start
        x_new = x_all[j:]
        dl_new = dl_all[j:]
        dr_new = dr_all[j:]
    else:
        i = j - 1  # interval [t_all[i], t_all[j]] contains the start
        x0 = _kernels.hermite_one_np(t_all, x_all, dl_all, dr_all, start)
        d0 = _kernels.hermite_deriv_many_np(t_all, x_all, dl_all, dr_all, np.array([start]))[0]
        t_new = np.concatenate(([start], t_all[j:]))
        x_new = np.concatenate((x0[None, :], x_all[j:]), axis=0)
        dl_new = np.concatenate((d0[None, :], dl_all[j:]), axis=0)
        dr_new = np.concatenate((dr_all[i : i + 1], dr_all[j:]), axis=0)
    out = HistorySegment._raw(
        np.ascontiguousarray(t_new),
        np.ascontiguousarray(x_new),
        np.ascontiguousarray(dl_new),
        np.ascontiguousarray(dr_new),
        new_time,
        delay,
        hermite=seg.hermite,
    )
    return out
