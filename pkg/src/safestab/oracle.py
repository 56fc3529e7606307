"""Independent numeric oracles.

``comparison_oracle``
    Integrates the two extremal scalar delay equations

        X' = -alpha(X) + eps1 * beta(max_{[t-delay, t]} X)
        Y' = -alpha(Y) + eps2 * beta(max_{[t-delay, t]} Y)

    from a shared history and checks ``X <= Y`` on the whole grid. With
    nondecreasing ``alpha``, ``beta``, ``beta >= 0`` on the range visited and
    ``eps1 < eps2`` the ordering must hold; a violation points at an
    integration or window-supremum bug.

``reaching_oracle``
    Closed-form reaching time ``|U0| / K`` of ``d|U|/dt = -K``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from .dde import DIVERGENCE_THRESHOLD
from .errors import ContractError

Table = Tuple[np.ndarray, np.ndarray]
ScalarMap = Union[Callable[[float], float], Table]


def _tabulate(fn: ScalarMap, lo: float, hi: float, num: int = 2001) -> Table:
    if isinstance(fn, tuple):
        xs = np.ascontiguousarray(fn[0], dtype=float)
        ys = np.ascontiguousarray(fn[1], dtype=float)
        if xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ContractError("a table needs >= 2 strictly increasing abscissae")
        return xs, ys
    xs = np.linspace(lo, hi, num)
    ys = np.array([float(fn(x)) for x in xs])
    return xs, ys


@dataclass(frozen=True)
class ComparisonInstance:
    """Data of one comparison-lemma check.

    Parameters
    ----------
    alpha, beta : callable or (xs, ys) table
        Nondecreasing scalar maps. Callables are tabulated on ``table_range``
        and applied piecewise linearly (the same tables drive both equations).
    eps1, eps2 : float
        ``0 <= eps1 < eps2 <= 1``.
    history : float, callable or array
        Shared history on ``[-delay, 0]``: a constant, a function of
        ``theta`` or ``round(delay/dt) + 1`` samples.
    delay, dt, tf : float
    table_range : (float, float), optional
        Abscissa range for tabulating callables; defaults to a range covering
        the history and zero with margin.
    """

    alpha: ScalarMap
    beta: ScalarMap
    eps1: float
    eps2: float
    history: Union[float, Callable[[float], float], Sequence[float]]
    delay: float = 1.0
    dt: float = 1e-2
    tf: float = 10.0
    table_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not (0.0 <= self.eps1 <= 1.0 and 0.0 <= self.eps2 <= 1.0):
            raise ContractError("eps1, eps2 must lie in [0, 1]")
        if not self.eps2 > self.eps1:
            raise ContractError("the comparison needs eps2 > eps1")
        if not (self.dt > 0 and self.delay >= self.dt and self.tf >= self.dt):
            raise ContractError("need dt > 0, delay >= dt and tf >= dt")
        q = self.delay / self.dt
        if abs(q - round(q)) > 1e-9 * max(1.0, q):
            raise ContractError("dt must divide the delay")
        a, b = self.tables()
        if np.any(np.diff(a[1]) < 0) or np.any(np.diff(b[1]) < 0):
            raise ContractError("alpha and beta must be nondecreasing")

    @property
    def window(self) -> int:
        return int(round(self.delay / self.dt))

    def history_samples(self) -> np.ndarray:
        n = self.window + 1
        h = self.history
        if callable(h):
            th = np.linspace(-self.delay, 0.0, n)
            return np.array([float(h(t)) for t in th])
        arr = np.atleast_1d(np.asarray(h, dtype=float))
        if arr.size == 1:
            return np.full(n, float(arr[0]))
        if arr.size != n:
            raise ContractError(f"history needs {n} samples, got {arr.size}")
        return arr.copy()

    def tables(self) -> Tuple[Table, Table]:
        if self.table_range is not None:
            lo, hi = self.table_range
        else:
            hs = self.history_samples()
            lo = min(0.0, float(hs.min())) - 1.0
            hi = 2.0 * max(1.0, float(np.abs(hs).max())) + 1.0
        return _tabulate(self.alpha, lo, hi), _tabulate(self.beta, lo, hi)


@dataclass
class ComparisonReport:
    holds: bool
    worst_gap: float
    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    aborted: bool = False


def comparison_oracle(inst: ComparisonInstance, tol: float = 1e-6) -> ComparisonReport:
    """Integrate both extremal equations (RK4) and test ``X <= Y + tol``.

    ``worst_gap`` is ``max(X - Y)`` over the grid. If either solution leaves
    ``|z| <= 1e9`` the run is truncated there and ``aborted`` is set.
    """
    (ax, ay), (bx, by) = inst.tables()
    hist = np.ascontiguousarray(inst.history_samples())
    nsteps = int(round(inst.tf / inst.dt))
    X, Y = _kernels.comparison_pair(ax, ay, bx, by, float(inst.eps1), float(inst.eps2),
                                    hist, inst.window, float(inst.dt), nsteps)
    times = np.arange(nsteps + 1) * inst.dt
    bad = ~(np.isfinite(X) & np.isfinite(Y)) | (np.abs(X) > DIVERGENCE_THRESHOLD) | (
        np.abs(Y) > DIVERGENCE_THRESHOLD)
    aborted = bool(bad.any())
    if aborted:
        stop = int(np.argmax(bad))
        X, Y, times = X[:stop], Y[:stop], times[:stop]
    gap = float(np.max(X - Y)) if X.size else 0.0
    return ComparisonReport(holds=gap <= tol, worst_gap=gap, times=times, X=X, Y=Y,
                            aborted=aborted)


def random_instance(rng: np.random.Generator, delay: float = 1.0, dt: float = 1e-2,
                    tf: float = 10.0, knots: int = 6) -> ComparisonInstance:
    """A random valid instance.

    ``alpha`` and ``beta`` are piecewise linear, nondecreasing and vanish at
    zero; ``beta`` is nonnegative on ``[0, inf)`` and the history is a
    nonnegative constant, so both solutions stay in ``[0, inf)``.
    """
    hist = float(rng.uniform(0.0, 3.0))
    hi = 2.0 * max(1.0, hist) + 1.0
    xs = np.concatenate(([-1.0, 0.0], np.sort(rng.uniform(0.0, hi, knots - 2)), [hi]))
    xs = np.unique(xs)

    def monotone_table():
        slopes = rng.uniform(0.0, 2.0, xs.size - 1)
        ys = np.concatenate(([0.0], np.cumsum(slopes * np.diff(xs))))
        ys -= ys[1]  # value 0 at x = 0
        return xs.copy(), ys

    alpha = monotone_table()
    beta = monotone_table()
    e1, e2 = np.sort(rng.uniform(0.0, 1.0, 2))
    if e2 - e1 < 1e-3:
        e2 = min(1.0, e1 + 0.1)
    return ComparisonInstance(alpha, beta, float(e1), float(e2), hist, delay, dt, tf)


def reaching_oracle(U0: float, K: float) -> float:
    """Reaching time ``|U0| / K`` of the linear reaching law ``d|U|/dt = -K``."""
    if not K > 0:
        raise ContractError("K must be positive")
    return abs(float(U0)) / float(K)
