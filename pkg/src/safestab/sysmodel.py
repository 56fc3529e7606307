"""Control-affine time-delay systems and comparison functions.

A system is the pair of functionals ``(f, g)`` in

    x'(t) = f(x_t) + g(x_t) u,

where ``x_t`` is the history segment ending at time ``t``. Both functionals
take a :class:`~safestab.history.HistorySegment` and must be locally
Lipschitz; that is a caller obligation the library cannot check.

Comparison functions (class K, K-infinity and K-bar) are thin wrappers around
scalar maps with a sampling-based property check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError
from .history import HistorySegment

#: Grid used by default when sampling class-K properties.
STANDARD_GRID = np.concatenate(([0.0], np.logspace(-4, 3, 71)))


class InputClampWarning(UserWarning):
    """An input was outside the configured input box and has been clamped."""


@dataclass(frozen=True)
class ControlAffineDelaySystem:
    """The functionals ``f`` and ``g`` plus bookkeeping.

    Attributes
    ----------
    n, m : int
        State and input dimensions.
    delay_bound : float
        Length of the history window the functionals read.
    drift : callable
        ``f(seg) -> (n,)``.
    input_map : callable
        ``g(seg) -> (n, m)``.
    input_box : tuple of arrays, optional
        ``(lower, upper)`` bounds on ``u``; ``None`` means unconstrained.
    delays : tuple of float
        Discrete delays read by ``f`` and ``g``; the integrator checks that the
        step divides each of them.
    name : str
        Label used in reports.
    """

    n: int
    m: int
    delay_bound: float
    drift: Callable[[HistorySegment], np.ndarray]
    input_map: Callable[[HistorySegment], np.ndarray]
    input_box: Optional[Tuple[np.ndarray, np.ndarray]] = None
    delays: Tuple[float, ...] = ()
    name: str = "system"

    def f(self, seg: HistorySegment) -> np.ndarray:
        return np.asarray(self.drift(seg), dtype=float).reshape(self.n)

    def g(self, seg: HistorySegment) -> np.ndarray:
        return np.asarray(self.input_map(seg), dtype=float).reshape(self.n, self.m)

    def clamp(self, u) -> Tuple[np.ndarray, bool]:
        """Project ``u`` onto the input box; returns ``(u_clamped, was_clamped)``."""
        u = np.asarray(u, dtype=float).reshape(self.m)
        if self.input_box is None:
            return u, False
        lo, hi = self.input_box
        uc = np.clip(u, lo, hi)
        return uc, bool(np.any(uc != u))


def eval_dynamics(
    sys: ControlAffineDelaySystem,
    seg: HistorySegment,
    u,
    diagnostics: Optional[Dict[str, int]] = None,
) -> np.ndarray:
    """Return ``f(seg) + g(seg) u``.

    ``u`` is clamped into the input box when one is configured. If a
    ``diagnostics`` dict is given its ``"clamped"`` counter is incremented;
    otherwise an :class:`InputClampWarning` is emitted.
    """
    if seg.dim != sys.n:
        raise ContractError(f"segment has dimension {seg.dim}, system expects {sys.n}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (sys.m,):
        raise ContractError(f"input has shape {u.shape}, system expects ({sys.m},)")
    u, clamped = sys.clamp(u)
    if clamped:
        if diagnostics is not None:
            diagnostics["clamped"] = diagnostics.get("clamped", 0) + 1
        else:
            warnings.warn("input clamped to the input box", InputClampWarning, stacklevel=2)
    return sys.f(seg) + sys.g(seg) @ u


def discrete_delay_system(
    rhs: Callable[..., np.ndarray],
    input_map: Callable[..., np.ndarray],
    n: int,
    m: int,
    delays: Sequence[float],
    input_box=None,
    name: str = "discrete-delay",
    time_varying: bool = False,
) -> ControlAffineDelaySystem:
    """Build a system whose functionals read a few point delays.

    ``rhs(x0, x_tau1, ..., x_tauk)`` and ``input_map(x0, x_tau1, ...)`` receive
    the current state followed by the delayed states, in the order of
    ``delays``. With ``time_varying=True`` both also receive the absolute time
    as the first argument.
    """
    delays = tuple(float(d) for d in delays)
    bound = max(delays) if delays else 0.0

    # drift and input map are usually evaluated back to back on the same
    # segment; remember the last one so the delayed states are read once
    # (holding the reference keeps its id from being reused)
    cache: list = [None, None]

    def _args(seg: HistorySegment):
        if cache[0] is seg:
            return cache[1]
        vals = [seg.current] + [seg.eval(-d) for d in delays]
        out = ([seg.time] + vals) if time_varying else vals
        cache[0], cache[1] = seg, out
        return out

    def drift(seg):
        return rhs(*_args(seg))

    def gmap(seg):
        return input_map(*_args(seg))

    return ControlAffineDelaySystem(
        n=n, m=m, delay_bound=bound, drift=drift, input_map=gmap,
        input_box=input_box, delays=delays, name=name,
    )


# ---------------------------------------------------------------------------
# comparison functions
# ---------------------------------------------------------------------------

KIND_K = "K"
KIND_KINF = "Kinf"
KIND_KBAR = "Kbar"
_KINDS = {KIND_K, KIND_KINF, KIND_KBAR}


@dataclass(frozen=True)
class ComparisonFunction:
    """A scalar comparison function with an optional inverse.

    ``kind`` is one of ``"K"``, ``"Kinf"`` (domain ``[0, inf)``) or ``"Kbar"``
    (domain the whole real line). The class is callable and vectorises over
    numpy arrays when ``forward`` does.
    """

    forward: Callable[[float], float]
    kind: str = KIND_KINF
    inverse: Optional[Callable[[float], float]] = None
    label: str = "custom"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ContractError(f"unknown comparison-function kind {self.kind!r}")

    def __call__(self, v):
        return self.forward(v)

    def __sub__(self, other: "ComparisonFunction") -> "ComparisonFunction":
        a, b = self.forward, other.forward
        return ComparisonFunction(lambda v: a(v) - b(v), kind=KIND_K,
                                  label=f"({self.label}) - ({other.label})")


@dataclass
class ComparisonReport:
    monotone: bool
    zero_at_zero: bool
    witnesses: list = field(default_factory=list)
    inverse_ok: Optional[bool] = None

    @property
    def ok(self) -> bool:
        return self.monotone and self.zero_at_zero and self.inverse_ok is not False


def check_comparison(
    fn, grid: Sequence[float] = STANDARD_GRID, tol: float = 1e-12
) -> ComparisonReport:
    """Sample the class-K properties of ``fn`` on ``grid``.

    ``monotone`` is true iff the values strictly increase along the grid;
    ``witnesses`` lists the offending consecutive ``(v_i, v_{i+1})`` pairs.
    ``fn`` may be a :class:`ComparisonFunction` or a plain callable.
    """
    g = np.asarray(grid, dtype=float)
    fwd = fn.forward if isinstance(fn, ComparisonFunction) else fn
    vals = np.array([float(fwd(v)) for v in g])
    bad = np.nonzero(np.diff(vals) <= 0.0)[0]
    witnesses = [(float(g[i]), float(g[i + 1])) for i in bad]
    zero_ok = abs(float(fwd(0.0))) <= tol
    inv_ok = None
    if isinstance(fn, ComparisonFunction) and fn.inverse is not None:
        back = np.array([float(fn.inverse(v)) for v in vals])
        inv_ok = bool(np.allclose(back, g, rtol=1e-8, atol=1e-10))
    return ComparisonReport(monotone=bad.size == 0, zero_at_zero=zero_ok,
                            witnesses=witnesses, inverse_ok=inv_ok)


def linear(k: float = 1.0) -> ComparisonFunction:
    """``v -> k v`` (class K-infinity for ``k > 0``)."""
    if k <= 0:
        raise ContractError("linear comparison function needs k > 0")
    return ComparisonFunction(lambda v: k * v, KIND_KINF, lambda w: w / k, f"{k}*v")


def power(k: float, p: float) -> ComparisonFunction:
    """``v -> k v**p`` on ``v >= 0``."""
    if k <= 0 or p <= 0:
        raise ContractError("power comparison function needs k, p > 0")
    return ComparisonFunction(
        lambda v: k * np.power(np.maximum(v, 0.0), p),
        KIND_KINF,
        lambda w: np.power(np.maximum(w, 0.0) / k, 1.0 / p),
        f"{k}*v^{p}",
    )


def log1p(k: float = 1.0) -> ComparisonFunction:
    """``v -> k ln(1 + v)`` (class K-infinity)."""
    return ComparisonFunction(lambda v: k * np.log1p(v), KIND_KINF,
                              lambda w: np.expm1(w / k), f"{k}*ln(1+v)")


def from_callable(fn: Callable[[float], float], kind: str = KIND_K,
                  inverse=None, label: str = "custom") -> ComparisonFunction:
    """Wrap a user closure."""
    return ComparisonFunction(fn, kind, inverse, label)
