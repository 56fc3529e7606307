"""Stabilisation certificates and closed-form stabilising controllers.

Two certificate shapes are supported:

* :class:`RazumikhinCertificate` -- a function ``V(x)`` of the current state,
  with the delay handled through comparisons against ``sup_theta V(phi(theta))``.
  Variant ``"CLRF-I"`` carries a Razumikhin premise ``rho(V(x)) >= V(phi(theta))``
  and a decay rate; variant ``"CLRF-II"`` carries a pair ``(gamma, eta)`` with
  ``gamma - eta`` of class K.
* :class:`KrasovskiiCertificate` -- a functional ``V1(phi(0)) + V2(phi)``, where
  the memory term ``V2`` comes with its upper Dini derivative along solutions.

The universal controller is Sontag's formula applied to
``a = (drift part of the decrease condition)`` and ``b = (L_g V)^T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .errors import ContractError
from .functional import fd_gradient
from .history import DEFAULT_REFINE, HistorySegment, sup_norm, sup_transform
from .sysmodel import ComparisonFunction, ControlAffineDelaySystem, check_comparison, STANDARD_GRID

CLRF_I = "CLRF-I"
CLRF_II = "CLRF-II"


@dataclass(frozen=True)
class RazumikhinCertificate:
    """A control Lyapunov-Razumikhin function.

    Parameters
    ----------
    variant : {"CLRF-I", "CLRF-II"}
    V : callable
        ``V(x) -> float``. With ``vectorized=True`` it must also accept an
        ``(k, n)`` array and return ``k`` values.
    grad : callable, optional
        ``grad(x) -> (n,)``. A central finite difference is used when omitted
        (see :attr:`uses_fd_gradient`).
    alpha1, alpha2 : ComparisonFunction, optional
        Sandwich bounds ``alpha1(|x|) <= V(x) <= alpha2(|x|)``.
    gamma, eta : ComparisonFunction, optional
        CLRF-II rates: the decrease condition reads
        ``L_f V + L_g V u < -gamma(V(x)) + eta(sup |V(phi)|)``.
    gamma_c, rho : ComparisonFunction, optional
        CLRF-I rate and Razumikhin gain (``rho > Id``).
    vectorized : bool
    """

    variant: str
    V: Callable
    grad: Optional[Callable] = None
    alpha1: Optional[ComparisonFunction] = None
    alpha2: Optional[ComparisonFunction] = None
    gamma: Optional[Callable] = None
    eta: Optional[Callable] = None
    gamma_c: Optional[Callable] = None
    rho: Optional[Callable] = None
    vectorized: bool = False
    refine: int = DEFAULT_REFINE

    def __post_init__(self):
        if self.variant not in (CLRF_I, CLRF_II):
            raise ContractError(f"unknown Razumikhin variant {self.variant!r}")
        if self.variant == CLRF_II and (self.gamma is None or self.eta is None):
            raise ContractError("CLRF-II needs both gamma and eta")

    # -- evaluation -------------------------------------------------------
    state_based = True

    @property
    def uses_fd_gradient(self) -> bool:
        return self.grad is None

    def value(self, x) -> float:
        return float(self.V(np.asarray(x, dtype=float)))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float).reshape(x.shape)
        return fd_gradient(self.value, x)

    def sup_value(self, seg: HistorySegment) -> float:
        """``sup_theta |V(phi(theta))|`` on the window grid."""
        if self.vectorized:
            return sup_transform(seg, lambda p: np.abs(self.V(p)), self.refine, vectorized=True)
        return sup_transform(seg, lambda p: abs(self.value(p)), self.refine)

    # surface-part protocol (value, head gradient, memory-term derivative)
    def value_seg(self, seg: HistorySegment) -> float:
        return self.value(seg.current)

    def head_grad(self, seg: HistorySegment) -> np.ndarray:
        return self.gradient(seg.current)

    def dplus_memory(self, seg: HistorySegment) -> float:
        return 0.0

    # -- property checks ---------------------------------------------------
    def check(self, samples: Sequence[np.ndarray] = (), grid=STANDARD_GRID) -> dict:
        """Sample the defining properties; returns a dict of named booleans."""
        out = {}
        if self.variant == CLRF_II:
            out["gamma_minus_eta_class_K"] = check_comparison(
                lambda v: self.gamma(v) - self.eta(v), grid).ok
        else:
            if self.rho is not None:
                g = np.asarray(grid, dtype=float)
                g = g[g > 0]
                out["rho_above_identity"] = bool(all(self.rho(v) > v for v in g))
        if samples and self.alpha1 is not None and self.alpha2 is not None:
            ok = True
            for x in samples:
                r = float(np.linalg.norm(x))
                v = self.value(x)
                ok &= self.alpha1(r) - 1e-12 <= v <= self.alpha2(r) + 1e-12
            out["sandwich"] = bool(ok)
        return out


@dataclass(frozen=True)
class KrasovskiiCertificate:
    """A control Lyapunov-Krasovskii functional ``V1(phi(0)) + V2(phi)``.

    Parameters
    ----------
    V1 : callable
        State part ``V1(x)``.
    grad1 : callable, optional
        Gradient of ``V1``; finite differences are used when omitted.
    V2 : callable
        Memory part ``V2(seg)`` with ``V2(0) = 0``.
    dplus_V2 : callable
        Upper Dini derivative of ``V2`` along solutions, as a functional of
        the history (it does not depend on the input).
    alpha1, alpha2 : ComparisonFunction, optional
        ``alpha1(|phi(0)|) <= V(phi) <= alpha2(||phi||)``.
    gamma : callable
        Decay rate in ``D+V < -gamma(V(phi))``.
    """

    V1: Callable
    V2: Callable
    dplus_V2: Callable
    gamma: Callable
    grad1: Optional[Callable] = None
    alpha1: Optional[ComparisonFunction] = None
    alpha2: Optional[ComparisonFunction] = None

    state_based = False

    @property
    def uses_fd_gradient(self) -> bool:
        return self.grad1 is None

    def value(self, seg: HistorySegment) -> float:
        return float(self.V1(seg.current)) + float(self.V2(seg))

    value_seg = value

    def head_grad(self, seg: HistorySegment) -> np.ndarray:
        x = seg.current
        if self.grad1 is not None:
            return np.asarray(self.grad1(x), dtype=float).reshape(x.shape)
        return fd_gradient(lambda y: float(self.V1(y)), x)

    def dplus_memory(self, seg: HistorySegment) -> float:
        return float(self.dplus_V2(seg))

    def check(self, samples: Sequence[HistorySegment] = ()) -> dict:
        out = {}
        if samples and self.alpha1 is not None and self.alpha2 is not None:
            ok = True
            for seg in samples:
                v = self.value(seg)
                ok &= self.alpha1(np.linalg.norm(seg.current)) - 1e-12 <= v
                ok &= v <= self.alpha2(sup_norm(seg)) + 1e-12
            out["sandwich"] = bool(ok)
        if samples:
            zero = HistorySegment.constant(np.zeros(samples[0].dim), samples[0].delay_bound)
            out["memory_vanishes_at_zero"] = abs(float(self.V2(zero))) <= 1e-12
        return out


Certificate = Union[RazumikhinCertificate, KrasovskiiCertificate]


def sontag_kappa(lam: float, p: float, q) -> np.ndarray:
    """Sontag's universal formula.

    Returns ``0`` when ``q = 0`` and otherwise
    ``-q (p + sqrt(p**2 + lam |q|**4)) / |q|**2``.
    """
    if not lam > 0:
        raise ContractError("lambda must be positive")
    q = np.atleast_1d(np.asarray(q, dtype=float))
    qq = float(q @ q)
    if qq == 0.0:
        return np.zeros_like(q)
    return -q * (p + math.sqrt(p * p + lam * qq * qq)) / qq


def _lgv(cert: Certificate, sys: ControlAffineDelaySystem, seg: HistorySegment):
    grad = cert.head_grad(seg)
    return grad, grad @ sys.g(seg)


def drift_term(cert: Certificate, sys: ControlAffineDelaySystem, seg: HistorySegment) -> float:
    """The input-free part ``a`` of the decrease condition (``a + b u < 0``)."""
    grad = cert.head_grad(seg)
    lfv = float(grad @ sys.f(seg))
    if isinstance(cert, KrasovskiiCertificate):
        return lfv + cert.dplus_memory(seg) + float(cert.gamma(cert.value(seg)))
    if cert.variant != CLRF_II:
        raise TypeError("the decrease condition is only defined for CLRF-II and Krasovskii certificates")
    vx = cert.value(seg.current)
    return lfv + float(cert.gamma(vx)) - float(cert.eta(cert.sup_value(seg)))


def _is_zero(seg: HistorySegment) -> bool:
    return sup_norm(seg, refine=1) == 0.0


def universal_controller(
    cert: Certificate, lam: float, sys: ControlAffineDelaySystem, seg: HistorySegment
) -> np.ndarray:
    """Sontag-type controller built from a CLRF-II or a Krasovskii certificate.

    Returns ``sontag_kappa(lam, a, b)`` with ``a`` from :func:`drift_term` and
    ``b = (grad V(phi(0)) g(phi))^T``; returns zero on the zero history.
    """
    if _is_zero(seg):
        return np.zeros(sys.m)
    a = drift_term(cert, sys, seg)
    _, b = _lgv(cert, sys, seg)
    return sontag_kappa(lam, a, b)


def domination_controller(
    cert: RazumikhinCertificate,
    dominating_gain: Callable[[float], float],
    sys: ControlAffineDelaySystem,
    seg: HistorySegment,
) -> np.ndarray:
    """``u = -dominating_gain(V(phi(0))) (L_g V)^T``."""
    _, b = _lgv(cert, sys, seg)
    return -float(dominating_gain(cert.value(seg.current))) * b


def razumikhin_condition(cert: RazumikhinCertificate, seg: HistorySegment, rho: Callable) -> bool:
    """True iff ``rho(V(phi(0))) >= sup_theta V(phi(theta))`` on the window grid."""
    vx = cert.value(seg.current)
    if cert.vectorized:
        sup_v = sup_transform(seg, cert.V, cert.refine, vectorized=True)
    else:
        sup_v = sup_transform(seg, cert.value, cert.refine)
    return float(rho(vx)) >= sup_v


def decrease_margin(
    cert: Certificate, sys: ControlAffineDelaySystem, seg: HistorySegment, u
) -> float:
    """Signed margin of the decrease condition; negative means ``u`` is admissible.

    For CLRF-II this is ``L_f V + L_g V u + gamma(V(x)) - eta(sup |V(phi)|)``; for
    a Krasovskii certificate ``L_f V1 + D+V2 + L_g V1 u + gamma(V(phi))``.
    On the zero history with ``u = 0`` the margin is ``0`` (vacuous, not
    admissible).

    Raises
    ------
    TypeError
        For CLRF-I certificates, whose decrease condition is conditional on
        the Razumikhin premise.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    a = drift_term(cert, sys, seg)
    _, b = _lgv(cert, sys, seg)
    return float(a + b @ u)


@dataclass
class SCPReport:
    """Outcome of :func:`scp_probe`.

    ``rows`` holds one dict per radius with keys ``delta``, ``max_u`` (largest
    input norm seen), ``eps`` (largest ``max(|a|/|b|, |b|)`` seen) and
    ``bound_ok`` (every sample satisfied ``|u| <= (2 + sqrt(lam)) eps_sample``).
    ``trend_ok`` is ``None`` for a single radius.
    """

    rows: List[dict] = field(default_factory=list)
    trend_ok: Optional[bool] = None

    @property
    def ratios(self) -> List[float]:
        out = []
        for r0, r1 in zip(self.rows, self.rows[1:]):
            out.append(r0["max_u"] / r1["max_u"] if r1["max_u"] > 0 else math.inf)
        return out


def random_segment(rng: np.random.Generator, n: int, delay: float, radius: float,
                   knots: int = 6) -> HistorySegment:
    """Random piecewise-linear history with ``sup |phi| <= radius``."""
    if rng.random() < 0.2 or delay == 0.0:
        v = rng.normal(size=n)
        v *= radius * rng.uniform(0.05, 1.0) / max(np.linalg.norm(v), 1e-300)
        return HistorySegment.constant(v, delay)
    vals = rng.normal(size=(knots, n))
    scale = radius * rng.uniform(0.05, 1.0) / np.max(np.linalg.norm(vals, axis=1))
    th = np.linspace(-delay, 0.0, knots)
    return HistorySegment(th, vals * scale, delay_bound=delay)


def scp_probe(
    cert: Certificate,
    sys: ControlAffineDelaySystem,
    deltas: Sequence[float],
    samples: int = 200,
    lam: float = 1.0,
    seed: int = 0,
) -> SCPReport:
    """Probe the small-control property of the universal controller.

    For each radius ``delta`` random histories with ``sup |phi| <= delta`` are
    drawn and the largest controller norm is recorded. The trend flag is set
    when every next maximum is at most twice the previous one and the last is
    below the first.
    """
    d = [float(x) for x in deltas]
    if any(x <= 0 for x in d) or any(b >= a for a, b in zip(d, d[1:])):
        raise ContractError("deltas must be positive and strictly decreasing")
    rng = np.random.default_rng(seed)
    rep = SCPReport()
    for delta in d:
        max_u, eps_max, ok = 0.0, 0.0, True
        for _ in range(samples):
            seg = random_segment(rng, sys.n, sys.delay_bound, delta)
            u = universal_controller(cert, lam, sys, seg)
            nu = float(np.linalg.norm(u))
            a = drift_term(cert, sys, seg)
            _, b = _lgv(cert, sys, seg)
            nb = float(np.linalg.norm(b))
            if nb > 0:
                eps = max(abs(a) / nb, nb)
                ok &= nu <= (2.0 + math.sqrt(lam)) * eps * (1 + 1e-12) + 1e-300
                eps_max = max(eps_max, eps)
            max_u = max(max_u, nu)
        rep.rows.append({"delta": delta, "max_u": max_u, "eps": eps_max, "bound_ok": bool(ok)})
    if len(rep.rows) > 1:
        mu = [r["max_u"] for r in rep.rows]
        rep.trend_ok = all(b <= 2.0 * a for a, b in zip(mu, mu[1:])) and mu[-1] <= mu[0] and (
            mu[-1] < mu[0] or mu[0] == 0.0
        )
    return rep


def chi_probe(cert: Certificate, sys: ControlAffineDelaySystem,
              segments: Sequence[HistorySegment]) -> float:
    """Worst ``L_f V / |L_g V|**2`` over the given histories (``inf`` if ``L_g V = 0``
    with ``L_f V > 0``); a sampled falsifier for small-input domination bounds."""
    worst = -math.inf
    for seg in segments:
        grad, b = _lgv(cert, sys, seg)
        lf = float(grad @ sys.f(seg))
        nb2 = float(b @ b)
        if nb2 == 0.0:
            val = math.inf if lf > 0 else -math.inf
        else:
            val = lf / nb2
        worst = max(worst, val)
    return worst
