"""Sliding-mode combination of a Lyapunov and a barrier certificate.

A sliding surface is ``U(phi) = Y(V(phi), B(phi))`` for a combination rule
``Y``. Along solutions

    D+U = F + G u + L,    F = H f,   G = H g,

where ``H`` collects the head gradients of both parts weighted by the partial
derivatives of ``Y`` and ``L`` collects the Dini derivatives of their memory
terms. Projecting ``f`` along the input direction gives the matrices
``M, J1, J2, J3`` computed by :func:`projection_matrices`; the equivalent control
``u_e`` renders ``D+U = 0`` and the sliding-mode law adds a reaching term
``K(phi)``:

    u = -G^T (H J3 H^T + L + K) / |G|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .barrier import BarrierCertificate, SafeSetFunction, membership
from .errors import ContractError, DomainError, TransversalityError, UnsupportedSurfaceError
from .functional import ZeroFunctional
from .history import DEFAULT_REFINE, HistorySegment, sup_transform
from .sysmodel import ControlAffineDelaySystem, STANDARD_GRID

#: Default lower bound on |G| below which the surface is treated as tangent.
TRANSVERSALITY_FLOOR = 1e-8

#: Band around zero inside which the Razumikhin-type gain switches off.
SLIDING_BAND = 1e-9


def sgn(v: float) -> float:
    """Sign with ``sgn(0) = 0``."""
    return 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)


# ---------------------------------------------------------------------------
# combination rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearCombiner:
    """``U = a V - b B + c`` with positive ``a, b, c``."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise ContractError("linear combiner needs positive a, b, c")

    def __call__(self, V: float, B: float) -> float:
        return self.a * V - self.b * B + self.c

    def partials(self, V: float, B: float):
        return self.a, -self.b


@dataclass(frozen=True)
class AdditiveCombiner:
    """``U = alpha(V) + beta(B)``; both default to the identity.

    Non-identity maps must come with their derivatives.
    """

    alpha: Optional[Callable] = None
    beta: Optional[Callable] = None
    dalpha: Optional[Callable] = None
    dbeta: Optional[Callable] = None

    def __post_init__(self):
        if self.alpha is not None and self.dalpha is None:
            raise ContractError("additive combiner: alpha given without its derivative")
        if self.beta is not None and self.dbeta is None:
            raise ContractError("additive combiner: beta given without its derivative")

    def __call__(self, V: float, B: float) -> float:
        a = V if self.alpha is None else float(self.alpha(V))
        b = B if self.beta is None else float(self.beta(B))
        return a + b

    def partials(self, V: float, B: float):
        da = 1.0 if self.dalpha is None else float(self.dalpha(V))
        db = 1.0 if self.dbeta is None else float(self.dbeta(B))
        return da, db


@dataclass(frozen=True)
class CustomCombiner:
    """User rule ``Y(V, B)`` with its partial derivatives."""

    rule: Callable[[float, float], float]
    dV: Callable[[float, float], float]
    dB: Callable[[float, float], float]

    def __call__(self, V: float, B: float) -> float:
        return float(self.rule(V, B))

    def partials(self, V: float, B: float):
        return float(self.dV(V, B)), float(self.dB(V, B))


def _as_part(obj):
    if obj is None:
        return ZeroFunctional()
    if isinstance(obj, BarrierCertificate):
        return obj.as_part()
    for attr in ("value_seg", "head_grad", "dplus_memory"):
        if not hasattr(obj, attr):
            raise ContractError(f"surface part {obj!r} lacks {attr}()")
    return obj


class SurfaceTerms(NamedTuple):
    """``D+U = F + G u + L`` together with ``H`` (``F = H f``, ``G = H g``)."""

    H: np.ndarray
    F: float
    G: np.ndarray
    L: float


class SurfaceValue(NamedTuple):
    U: float
    W: float


class SlidingSurface:
    """``U(phi) = combiner(V(phi), B(phi))``.

    Parameters
    ----------
    combiner : LinearCombiner, AdditiveCombiner or CustomCombiner
    lyap : certificate or separable functional
        Anything exposing ``value_seg``, ``head_grad`` and ``dplus_memory``.
    barrier : BarrierCertificate, SafeSetFunction, separable functional or None
        ``None`` means ``B = 0``. Reciprocal certificates contribute ``B``,
        zeroing ones contribute ``h``.
    state_value : callable, optional
        Vectorised ``U`` on stacked states, ``(k, n) -> (k,)``. Speeds up window
        suprema for state-based surfaces.
    safe_set : SafeSetFunction, optional
        Used by :func:`surface_validity`; taken from ``barrier`` when that is a
        certificate.
    """

    def __init__(self, combiner, lyap, barrier=None, state_value: Optional[Callable] = None,
                 safe_set: Optional[SafeSetFunction] = None, refine: int = DEFAULT_REFINE):
        self.combiner = combiner
        self.lyap = _as_part(lyap)
        self.barrier_source = barrier
        self.barrier = _as_part(barrier)
        self.state_value = state_value
        if safe_set is None:
            if isinstance(barrier, BarrierCertificate):
                safe_set = barrier.safe_set
            elif isinstance(barrier, SafeSetFunction):
                safe_set = barrier
        self.safe_set = safe_set
        self.refine = refine

    @property
    def state_based(self) -> bool:
        return bool(getattr(self.lyap, "state_based", False)) and bool(
            getattr(self.barrier, "state_based", False))

    def parts(self, seg: HistorySegment):
        return float(self.lyap.value_seg(seg)), float(self.barrier.value_seg(seg))

    def value_seg(self, seg: HistorySegment) -> float:
        V, B = self.parts(seg)
        return float(self.combiner(V, B))

    def value_at_state(self, x) -> float:
        """``U`` at a state (state-based surfaces only)."""
        return self.value_seg(HistorySegment.constant(x, 0.0))

    def sup_abs(self, seg: HistorySegment) -> float:
        """``sup_theta |U(phi(theta))|`` on the window grid (state-based surfaces)."""
        if not self.state_based:
            raise UnsupportedSurfaceError("window supremum needs a state-based surface")
        if self.state_value is not None:
            return sup_transform(seg, lambda p: np.abs(self.state_value(p)), self.refine, True)
        return sup_transform(seg, lambda p: abs(self.value_at_state(p)), self.refine)

    def terms(self, sys: ControlAffineDelaySystem, seg: HistorySegment,
              f: Optional[np.ndarray] = None, g: Optional[np.ndarray] = None) -> SurfaceTerms:
        """``(H, F, G, L)``; ``f``, ``g`` may be passed when already evaluated."""
        V, B = self.parts(seg)
        dV, dB = self.combiner.partials(V, B)
        H = np.zeros(seg.dim)
        L = 0.0
        if dV != 0.0:
            H = H + dV * self.lyap.head_grad(seg)
            L += dV * float(self.lyap.dplus_memory(seg))
        if dB != 0.0:
            H = H + dB * self.barrier.head_grad(seg)
            L += dB * float(self.barrier.dplus_memory(seg))
        F = float(H @ (sys.f(seg) if f is None else f))
        G = H @ (sys.g(seg) if g is None else g)
        return SurfaceTerms(H, F, G, L)


def surface_eval(surf, seg: HistorySegment) -> SurfaceValue:
    """Return ``U`` and ``W = U**2 / 2``."""
    U = float(surf.value_seg(seg))
    return SurfaceValue(U, 0.5 * U * U)


def surface_terms(surf, sys: ControlAffineDelaySystem, seg: HistorySegment) -> SurfaceTerms:
    """``(H, F, G, L)`` such that ``D+U = F + G u + L``."""
    return surf.terms(sys, seg)


# ---------------------------------------------------------------------------
# projection algebra
# ---------------------------------------------------------------------------


class ProjectionMatrices(NamedTuple):
    M: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray


def projection_matrices(f, g, H, denominator: Optional[float] = None) -> ProjectionMatrices:
    """Projection matrix and the J-decomposition of ``f`` along ``g``.

    With ``G = H g`` and ``J = f G g^T``:

    ``M = I - g G^T H / |G|^2``, ``J1 = (J - J^T) / |G|^2``,
    ``J2 = (J^T - J) / (2 |G|^2)``, ``J3 = (J + J^T) / (2 |G|^2)``.

    These satisfy ``M f = J1 H^T``, ``J1 = -2 J2`` and ``f = (J3 - J2) H^T``.
    ``denominator`` replaces ``|G|^2`` (used when it is floored).
    """
    f = np.asarray(f, dtype=float).ravel()
    H = np.asarray(H, dtype=float).ravel()
    g = np.asarray(g, dtype=float).reshape(f.size, -1)
    G = H @ g
    d = float(G @ G) if denominator is None else float(denominator)
    gG = g @ G  # g G^T as an n-vector
    J = np.outer(f, gG)
    M = np.eye(f.size) - np.outer(gG, H) / d
    J1 = (J - J.T) / d
    J2 = (J.T - J) / (2.0 * d)
    J3 = (J + J.T) / (2.0 * d)
    return ProjectionMatrices(M, J1, J2, J3)


def j_decomposition(sys: ControlAffineDelaySystem, seg: HistorySegment, H,
                    floor: float = TRANSVERSALITY_FLOOR) -> ProjectionMatrices:
    """:func:`projection_matrices` for ``f(seg)``, ``g(seg)``.

    Raises
    ------
    TransversalityError
        When ``|H g| < floor``.
    """
    g = sys.g(seg)
    G = np.asarray(H, dtype=float) @ g
    if float(np.linalg.norm(G)) < floor:
        raise TransversalityError(
            f"|G| = {np.linalg.norm(G):.3g} below the transversality floor {floor:g}: "
            "the input direction does not cross the surface (requires G = H g != 0)"
        )
    return projection_matrices(sys.f(seg), g, H)


def _control_from_terms(terms: SurfaceTerms, K: float, denom: float) -> np.ndarray:
    # H J3 H^T with J = f (g G)^T collapses to (H f)(G . G) / denom, so the
    # matrices of projection_matrices need not be formed in the loop
    G = np.asarray(terms.G, dtype=float)
    hj3h = terms.F * float(G @ G) / denom
    return -G * (hj3h + terms.L + K) / denom


def equivalent_control(surf, sys: ControlAffineDelaySystem, seg: HistorySegment,
                       floor: float = TRANSVERSALITY_FLOOR) -> np.ndarray:
    """``u_e = -G^T (H J3 H^T + L) / |G|^2``, the input giving ``D+U = 0``."""
    t = surf.terms(sys, seg)
    gnorm = float(np.linalg.norm(t.G))
    if gnorm < floor:
        raise TransversalityError(
            f"|G| = {gnorm:.3g} below the transversality floor {floor:g}"
        )
    return _control_from_terms(t, 0.0, gnorm * gnorm)


# ---------------------------------------------------------------------------
# reaching gains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GainSpec:
    """Reaching term ``K(phi)`` of the sliding-mode law.

    Build with :meth:`sign`, :meth:`sigmoid`, :meth:`razumikhin` or
    :meth:`krasovskii`.
    """

    variant: str
    K: float = 0.0
    eps: float = 0.0
    K1: float = 0.0
    alpha: Optional[Callable] = None
    alpha_slope: Optional[float] = None

    @classmethod
    def sign(cls, K: float) -> "GainSpec":
        """``K sgn(U)``."""
        if not K > 0:
            raise ContractError("sign gain needs K > 0")
        return cls("sign", K=float(K))

    @classmethod
    def sigmoid(cls, K: float, eps: float) -> "GainSpec":
        """``K U / (|U| + eps)``."""
        if not (K > 0 and eps > 0):
            raise ContractError("sigmoid gain needs K, eps > 0")
        return cls("sigmoid", K=float(K), eps=float(eps))

    @classmethod
    def razumikhin(cls, K1: float, alpha=2.0, grid=STANDARD_GRID) -> "GainSpec":
        """``K1 U(phi(0)) - alpha(sup|U(phi)|**2) / U(phi(0))``.

        ``alpha`` is either a slope ``c`` (``alpha(v) = c v``) or a callable;
        ``0 < alpha(v) < K1 v`` is checked on ``grid``.
        """
        if not K1 > 0:
            raise ContractError("razumikhin gain needs K1 > 0")
        slope = None
        if callable(alpha):
            fn = alpha
        else:
            slope = float(alpha)
            fn = lambda v, c=slope: c * v  # noqa: E731
        g = np.asarray(grid, dtype=float)
        g = g[g > 0]
        vals = np.array([float(fn(v)) for v in g])
        if np.any(vals <= 0) or np.any(vals >= K1 * g):
            raise ContractError("razumikhin gain needs 0 < alpha(v) < K1 v")
        return cls("razumikhin", K1=float(K1), alpha=fn, alpha_slope=slope)

    @classmethod
    def krasovskii(cls, K1: float) -> "GainSpec":
        """``K1 U(phi)``."""
        if not K1 > 0:
            raise ContractError("krasovskii gain needs K1 > 0")
        return cls("krasovskii", K1=float(K1))

    def evaluate(self, surf, seg: HistorySegment, U: Optional[float] = None) -> float:
        if U is None:
            U = float(surf.value_seg(seg))
        if self.variant == "sign":
            return self.K * sgn(U)
        if self.variant == "sigmoid":
            return self.K * U / (abs(U) + self.eps)
        if self.variant == "krasovskii":
            return self.K1 * U
        if self.variant == "razumikhin":
            if abs(U) <= SLIDING_BAND:
                return 0.0
            s = surf.sup_abs(seg)
            s = max(s, abs(U))
            return self.K1 * U - float(self.alpha(s * s)) / U
        raise ContractError(f"unknown gain variant {self.variant!r}")

    def describe(self) -> str:
        if self.variant == "sign":
            return f"sign(K={self.K:g})"
        if self.variant == "sigmoid":
            return f"sigmoid(K={self.K:g}, eps={self.eps:g})"
        if self.variant == "krasovskii":
            return f"krasovskii(K1={self.K1:g})"
        a = f"{self.alpha_slope:g}*v" if self.alpha_slope is not None else "custom"
        return f"razumikhin(K1={self.K1:g}, alpha={a})"


class SMCController:
    """Sliding-mode law ``u = -G^T (H J3 H^T + L + K) / max(|G|^2, floor^2)``.

    The controller is callable on a history. When ``|G|`` drops below the
    transversality floor the denominator is clamped at ``floor**2`` and
    :attr:`near_floor_count` is incremented (``strict=True`` raises instead).
    The most recent surface value, gain and ``|G|`` are kept in
    :attr:`last` for diagnostic channels.
    """

    def __init__(self, surf, sys: ControlAffineDelaySystem, gain: GainSpec,
                 floor: float = TRANSVERSALITY_FLOOR, strict: bool = False):
        self.surf = surf
        self.sys = sys
        self.gain = gain
        self.floor = float(floor)
        self.strict = strict
        self.near_floor_count = 0
        self.last: Dict[str, float] = {}

    def __call__(self, seg: HistorySegment) -> np.ndarray:
        f, g = self.sys.f(seg), self.sys.g(seg)
        terms = self.surf.terms(self.sys, seg, f, g)
        gnorm = float(np.linalg.norm(terms.G))
        if gnorm < self.floor:
            if self.strict:
                raise TransversalityError(
                    f"|G| = {gnorm:.3g} below the transversality floor {self.floor:g}")
            self.near_floor_count += 1
            denom = self.floor * self.floor
        else:
            denom = gnorm * gnorm
        U = float(self.surf.value_seg(seg))
        K = self.gain.evaluate(self.surf, seg, U)
        self.last = {"U": U, "K": K, "G": gnorm, "near_floor": float(gnorm < self.floor)}
        return _control_from_terms(terms, K, denom)


def smc_controller(surf, sys: ControlAffineDelaySystem, gain: GainSpec,
                   seg: HistorySegment, floor: float = TRANSVERSALITY_FLOOR) -> np.ndarray:
    """One evaluation of the sliding-mode law (raises on transversality loss)."""
    return SMCController(surf, sys, gain, floor=floor, strict=True)(seg)


# ---------------------------------------------------------------------------
# surface validity
# ---------------------------------------------------------------------------


@dataclass
class ValidityReport:
    """Per-condition outcome of :func:`surface_validity`.

    ``conditions`` maps a condition name to ``(passed, worst_margin)``; a
    ``passed`` of ``None`` means the condition was not applicable. ``flags``
    lists degeneracies such as an initial history on the boundary.
    """

    conditions: Dict[str, tuple] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(p is not False for p, _ in self.conditions.values())


def _value_or_inf(surf, seg) -> float:
    try:
        return float(surf.value_seg(seg))
    except DomainError:
        # reciprocal barrier blows up: sign follows the barrier weight
        V = float(surf.lyap.value_seg(seg))
        _, dB = surf.combiner.partials(V, 1.0)
        return math.inf if dB >= 0 else -math.inf


def _window_values(surf, seg) -> np.ndarray:
    if surf.state_based:
        pts = seg.eval_many(seg.grid(surf.refine))
        return np.array([_value_or_inf(surf, HistorySegment.constant(p, 0.0)) for p in pts])
    return np.array([_value_or_inf(surf, seg)])


def surface_validity(surf: SlidingSurface, xi: HistorySegment,
                     boundary_samples: Sequence[HistorySegment] = (),
                     root_samples: Sequence[HistorySegment] = ()) -> ValidityReport:
    """Check the sufficient conditions under which sliding keeps the state safe.

    * ``initial_bound`` (linear combiner): ``0 <= sup|U(xi)| < c``.
    * ``boundary_dominance``: ``U(phi) >= U(xi)`` for every boundary sample.
    * ``boundary_abs_dominance``: ``|U(phi(theta))| >= |U(xi(theta))|`` pointwise.
    * ``roots_interior``: every sample with ``U = 0`` lies strictly inside the
      safe set.

    A reciprocal barrier evaluated on the boundary is treated as infinite.
    """
    rep = ValidityReport()
    if surf.safe_set is not None:
        m = membership(surf.safe_set, xi)
        if m.region != "interior":
            rep.flags.append(f"initial history head is on the {m.region} of the safe set (degenerate)")
    xi_vals = _window_values(surf, xi)
    if not np.all(np.isfinite(xi_vals)):
        rep.flags.append("surface undefined on the initial history (degenerate)")
    u_xi = float(np.max(np.abs(xi_vals)))
    if isinstance(surf.combiner, LinearCombiner):
        c = surf.combiner.c
        rep.conditions["initial_bound"] = (bool(u_xi < c), c - u_xi)
    else:
        rep.conditions["initial_bound"] = (None, float("nan"))
    if boundary_samples:
        u0 = _value_or_inf(surf, xi)
        worst = min(_value_or_inf(surf, s) - u0 for s in boundary_samples)
        rep.conditions["boundary_dominance"] = (bool(worst >= 0), worst)
        worst_abs = math.inf
        for s in boundary_samples:
            vals = _window_values(surf, s)
            if vals.size == xi_vals.size:
                diff = np.abs(vals) - np.abs(xi_vals)
            else:
                # different sample grids: compare the weakest point against the worst
                diff = np.array([np.min(np.abs(vals)) - np.max(np.abs(xi_vals))])
            diff = np.where(np.isnan(diff), math.inf, diff)
            worst_abs = min(worst_abs, float(np.min(diff)))
        if worst_abs == 0.0:
            rep.flags.append("boundary_abs_dominance holds with equality (degenerate)")
        rep.conditions["boundary_abs_dominance"] = (bool(worst_abs >= 0), worst_abs)
    else:
        rep.conditions["boundary_dominance"] = (None, float("nan"))
        rep.conditions["boundary_abs_dominance"] = (None, float("nan"))
    if root_samples:
        if surf.safe_set is None:
            rep.conditions["roots_interior"] = (None, float("nan"))
        else:
            hs = [surf.safe_set.value_seg(s) for s in root_samples]
            rep.conditions["roots_interior"] = (bool(min(hs) > 0), float(min(hs)))
    else:
        rep.conditions["roots_interior"] = (None, float("nan"))
    return rep


# ---------------------------------------------------------------------------
# relative-degree-two surfaces
# ---------------------------------------------------------------------------


def _replace_head(seg: HistorySegment, x) -> HistorySegment:
    if seg.is_constant:
        return HistorySegment.constant(x, seg.delay_bound, time=seg.time)
    vals = seg._x.copy()
    vals[-1] = x
    return HistorySegment._raw(seg._t, vals, seg._dl, seg._dr, seg.time, seg.delay_bound,
                               seg.hermite)


def _shift_memory(seg: HistorySegment, s: float) -> HistorySegment:
    """First-order time shift of the past of ``seg`` with the head held fixed."""
    if seg.is_constant:
        return seg
    th = seg.thetas
    vals = seg.eval_many(th)
    ders = np.array([seg.derivative(t) for t in th[:-1]] + [np.zeros(seg.dim)])
    vals[:-1] += s * ders[:-1]
    return HistorySegment(th, vals, delay_bound=seg.delay_bound, time=seg.time)


class SecondOrderSurface:
    """``Ubar = a U + b L_f U`` for a state-based surface with ``L_g U = 0``.

    ``L_f U = H(phi) f(phi)``. Its head gradient is taken from ``lfu_grad``
    when supplied and from central differences in the head otherwise; the
    contribution of the past of the history is differenced along a
    first-order shift of the stored samples.
    """

    state_based = True

    def __init__(self, surf: SlidingSurface, sys: ControlAffineDelaySystem, a: float, b: float,
                 lfu_grad: Optional[Callable] = None, step: float = 1e-6):
        self.surf = surf
        self.sys = sys
        self.a = float(a)
        self.b = float(b)
        self.lfu_grad = lfu_grad
        self.step = step
        self.refine = surf.refine
        self.safe_set = surf.safe_set

    def lfu(self, seg: HistorySegment) -> float:
        return float(self.surf.terms(self.sys, seg).F)

    def value_seg(self, seg: HistorySegment) -> float:
        return self.a * float(self.surf.value_seg(seg)) + self.b * self.lfu(seg)

    def _lfu_head_grad(self, seg: HistorySegment) -> np.ndarray:
        if self.lfu_grad is not None:
            return np.asarray(self.lfu_grad(seg), dtype=float).reshape(seg.dim)
        x = seg.current
        h = self.step * (1.0 + np.linalg.norm(x))
        out = np.empty(seg.dim)
        for i in range(seg.dim):
            e = np.zeros(seg.dim)
            e[i] = h
            out[i] = (self.lfu(_replace_head(seg, x + e)) - self.lfu(_replace_head(seg, x - e))) / (2 * h)
        return out

    def _lfu_memory_rate(self, seg: HistorySegment) -> float:
        if seg.is_constant or seg.delay_bound == 0.0:
            return 0.0
        s = self.step * max(1.0, seg.delay_bound)
        return (self.lfu(_shift_memory(seg, s)) - self.lfu(_shift_memory(seg, -s))) / (2 * s)

    def head_grad(self, seg: HistorySegment) -> np.ndarray:
        base = self.surf.terms(self.sys, seg).H
        return self.a * base + self.b * self._lfu_head_grad(seg)

    def dplus_memory(self, seg: HistorySegment) -> float:
        return self.a * self.surf.terms(self.sys, seg).L + self.b * self._lfu_memory_rate(seg)

    def terms(self, sys: ControlAffineDelaySystem, seg: HistorySegment,
              f: Optional[np.ndarray] = None, g: Optional[np.ndarray] = None) -> SurfaceTerms:
        H = self.head_grad(seg)
        L = self.dplus_memory(seg)
        f = sys.f(seg) if f is None else f
        g = sys.g(seg) if g is None else g
        return SurfaceTerms(H, float(H @ f), H @ g, L)

    def sup_abs(self, seg: HistorySegment) -> float:
        """``|Ubar|`` at the current history.

        Window values of ``L_f U`` would need the history's own past, which a
        segment does not carry; the current value is a lower bound of the
        window supremum.
        """
        return abs(self.value_seg(seg))


def second_order_surface(surf: SlidingSurface, sys: ControlAffineDelaySystem,
                         a: float, b: float, lfu_grad: Optional[Callable] = None) -> SecondOrderSurface:
    """Compose ``Ubar = a U + b L_f U`` (restores transversality when ``L_g U = 0``).

    Raises
    ------
    ValueError
        If ``a`` or ``b`` is zero.
    UnsupportedSurfaceError
        For surfaces with memory (functional) parts.
    """
    if a == 0 or b == 0:
        raise ValueError("second-order surface needs nonzero a and b")
    if not surf.state_based:
        raise UnsupportedSurfaceError(
            "second-order surfaces are only available for state-based surfaces")
    return SecondOrderSurface(surf, sys, a, b, lfu_grad=lfu_grad)
