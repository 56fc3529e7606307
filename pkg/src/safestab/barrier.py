"""Safe sets, barrier certificates and forward-invariance monitoring.

A safe set is the zero-superlevel set of ``h``. Two shapes are supported:
state functions ``h(x)`` and separable functionals
``h(phi) = h1(phi(0)) + h2(phi)``.

Barrier certificates come in four variants. *Reciprocal* variants
(``"R-CBRF"``, ``"R-CBKF"``) use a function ``B`` that blows up at the
boundary and must not grow faster than an allowed rate; *zeroing* variants
(``"Z-CBRF"``, ``"Z-CBKF"``) use ``h`` itself, which must not decrease faster
than an allowed rate. All admissible-input tests are reported as a signed
margin with one convention: negative means the input is admissible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .dde import Trajectory
from .errors import ContractError, DomainError
from .functional import fd_gradient
from .history import DEFAULT_REFINE, HistorySegment, sup_transform
from .sysmodel import ComparisonFunction, ControlAffineDelaySystem

BOUNDARY_TOL = 1e-9
H_FLOOR = 1e-12

R_CBRF = "R-CBRF"
Z_CBRF = "Z-CBRF"
R_CBKF = "R-CBKF"
Z_CBKF = "Z-CBKF"
_VARIANTS = (R_CBRF, Z_CBRF, R_CBKF, Z_CBKF)


def psgn(v: float) -> float:
    """Positive-part sign: ``1`` for ``v >= 0`` and ``0`` otherwise."""
    return 1.0 if v >= 0.0 else 0.0


@dataclass(frozen=True)
class SafeSetFunction:
    """The function ``h`` defining a safe set ``{h >= 0}``.

    Use :meth:`state` or :meth:`functional` to construct.
    """

    kind: str
    h1: Callable
    grad1: Optional[Callable] = None
    h2: Optional[Callable] = None
    dplus_h2: Optional[Callable] = None
    vectorized: bool = False

    @classmethod
    def state(cls, h: Callable, grad: Optional[Callable] = None,
              vectorized: bool = False) -> "SafeSetFunction":
        """Safe set ``{x : h(x) >= 0}``."""
        return cls("state", h, grad, vectorized=vectorized)

    @classmethod
    def functional(cls, h1: Callable, h2: Callable, dplus_h2: Callable,
                   grad1: Optional[Callable] = None) -> "SafeSetFunction":
        """Safe set ``{phi : h1(phi(0)) + h2(phi) >= 0}``."""
        return cls("functional", h1, grad1, h2, dplus_h2)

    @classmethod
    def separable(cls, h1: Callable, grad1: Optional[Callable] = None) -> "SafeSetFunction":
        """Functional-kind wrapper of a state function (``h2 = 0``)."""
        return cls("functional", h1, grad1, lambda seg: 0.0, lambda seg: 0.0)

    @property
    def state_based(self) -> bool:
        return self.kind == "state"

    def __call__(self, arg) -> float:
        if isinstance(arg, HistorySegment):
            return self.value_seg(arg)
        if self.kind != "state":
            raise ContractError("a functional safe set needs a HistorySegment argument")
        return float(self.h1(np.asarray(arg, dtype=float)))

    def value_seg(self, seg: HistorySegment) -> float:
        v = float(self.h1(seg.current))
        if self.h2 is not None:
            v += float(self.h2(seg))
        return v

    def head_grad(self, seg: HistorySegment) -> np.ndarray:
        x = seg.current
        if self.grad1 is not None:
            return np.asarray(self.grad1(x), dtype=float).reshape(x.shape)
        return fd_gradient(lambda y: float(self.h1(y)), x)

    def dplus_memory(self, seg: HistorySegment) -> float:
        return 0.0 if self.dplus_h2 is None else float(self.dplus_h2(seg))

    def sup_abs(self, seg: HistorySegment, refine: int = DEFAULT_REFINE) -> float:
        """``sup_theta |h(phi(theta))|`` for a state-kind set."""
        if self.kind != "state":
            raise ContractError("window supremum of h is defined for state-kind sets only")
        if self.vectorized:
            return sup_transform(seg, lambda p: np.abs(self.h1(p)), refine, vectorized=True)
        return sup_transform(seg, lambda p: abs(float(self.h1(p))), refine)


class Membership(NamedTuple):
    region: str  # "interior", "boundary" or "exterior"
    h: float


def membership(ss: SafeSetFunction, arg) -> Membership:
    """Classify a state or history by the sign of ``h`` (boundary tolerance 1e-9)."""
    h = ss(arg)
    if abs(h) <= BOUNDARY_TOL:
        return Membership("boundary", h)
    return Membership("interior" if h > 0 else "exterior", h)


@dataclass(frozen=True)
class BarrierCertificate:
    """One of the four barrier certificate variants.

    Parameters
    ----------
    variant : {"R-CBRF", "Z-CBRF", "R-CBKF", "Z-CBKF"}
    safe_set : SafeSetFunction
    B : callable, optional
        Reciprocal barrier (state part for ``R-CBKF``); required for R-types.
    grad_B : callable, optional
        Gradient of ``B``; finite differences otherwise.
    B2, dplus_B2 : callable, optional
        Memory part of a reciprocal barrier functional and its Dini derivative.
    alpha1, alpha2 : ComparisonFunction, optional
        Sandwich bounds ``alpha1(h) <= 1/B <= alpha2(h)``.
    gamma, eta : callable
        Rate functions. ``eta`` is used by the Razumikhin variants only.
    enlarged_set : SafeSetFunction, optional
        The superset on which a zeroing certificate's condition is imposed;
        defaults to the safe set.
    """

    variant: str
    safe_set: SafeSetFunction
    gamma: Callable
    eta: Optional[Callable] = None
    B: Optional[Callable] = None
    grad_B: Optional[Callable] = None
    B2: Optional[Callable] = None
    dplus_B2: Optional[Callable] = None
    alpha1: Optional[ComparisonFunction] = None
    alpha2: Optional[ComparisonFunction] = None
    enlarged_set: Optional[SafeSetFunction] = None

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ContractError(f"unknown barrier variant {self.variant!r}")
        if self.reciprocal and self.B is None:
            raise ContractError(f"{self.variant} needs a reciprocal barrier B")
        if self.variant in (R_CBRF, Z_CBRF) and self.eta is None:
            raise ContractError(f"{self.variant} needs both gamma and eta")

    @property
    def reciprocal(self) -> bool:
        return self.variant in (R_CBRF, R_CBKF)

    @property
    def krasovskii(self) -> bool:
        return self.variant in (R_CBKF, Z_CBKF)

    @property
    def domain(self) -> SafeSetFunction:
        return self.enlarged_set or self.safe_set

    # reciprocal barrier as a separable functional
    def barrier_value(self, seg: HistorySegment) -> float:
        self._require_interior(seg)
        v = float(self.B(seg.current))
        if self.B2 is not None:
            v += float(self.B2(seg))
        return v

    def barrier_head_grad(self, seg: HistorySegment) -> np.ndarray:
        x = seg.current
        if self.grad_B is not None:
            return np.asarray(self.grad_B(x), dtype=float).reshape(x.shape)
        return fd_gradient(lambda y: float(self.B(y)), x)

    def barrier_dplus(self, seg: HistorySegment) -> float:
        return 0.0 if self.dplus_B2 is None else float(self.dplus_B2(seg))

    def _require_interior(self, seg: HistorySegment) -> float:
        h = self.safe_set.value_seg(seg)
        if h <= BOUNDARY_TOL:
            raise DomainError(
                f"reciprocal barrier undefined at h = {h:.3g} (boundary or exterior)"
            )
        return h

    def as_part(self):
        """The functional that enters a sliding surface (``B`` or ``h``)."""
        if self.reciprocal:
            return _ReciprocalPart(self)
        return self.safe_set


class _ReciprocalPart:
    def __init__(self, cert: BarrierCertificate):
        self.cert = cert
        self.state_based = cert.B2 is None

    def value_seg(self, seg):
        return self.cert.barrier_value(seg)

    def head_grad(self, seg):
        return self.cert.barrier_head_grad(seg)

    def dplus_memory(self, seg):
        return self.cert.barrier_dplus(seg)


def barrier_margin(
    cert: BarrierCertificate, sys: ControlAffineDelaySystem, seg: HistorySegment, u
) -> float:
    """Signed admissibility margin; negative means ``u`` is admissible.

    Reciprocal variants: ``margin = LHS - RHS`` of
    ``L_f B + D+B2 + L_g B u < rate``. Zeroing variants: ``margin = RHS - LHS``
    of ``L_f h + D+h2 + L_g h u > -rate``. Razumikhin variants use
    ``gamma(h(x)) -/+ eta(sup |h(phi)|)`` as the rate, Krasovskii variants
    ``gamma(h(phi))``.

    Raises
    ------
    DomainError
        Reciprocal variant evaluated on or outside the boundary.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    f = sys.f(seg)
    g = sys.g(seg)
    if cert.reciprocal:
        h = cert._require_interior(seg)
        grad = cert.barrier_head_grad(seg)
        lhs = float(grad @ f + (grad @ g) @ u) + cert.barrier_dplus(seg)
        if cert.variant == R_CBRF:
            rhs = float(cert.gamma(h)) - float(cert.eta(cert.safe_set.sup_abs(seg)))
        else:
            rhs = float(cert.gamma(h))
        return lhs - rhs
    ss = cert.safe_set
    h = ss.value_seg(seg)
    grad = ss.head_grad(seg)
    lhs = float(grad @ f + (grad @ g) @ u) + ss.dplus_memory(seg)
    if cert.variant == Z_CBRF:
        rhs = -float(cert.gamma(h)) + float(cert.eta(ss.sup_abs(seg)))
    else:
        rhs = -float(cert.gamma(h))
    return rhs - lhs


@dataclass
class SandwichReport:
    passed: List[bool] = field(default_factory=list)
    worst_violation: float = 0.0
    notes: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.passed)


def sandwich_check(cert: BarrierCertificate, samples: Sequence) -> SandwichReport:
    """Check ``alpha1(h) <= 1/B <= alpha2(h)`` at interior samples.

    Samples may be states (state-kind sets) or histories. Non-interior
    samples are skipped with a note.
    """
    if not cert.reciprocal:
        raise ContractError("sandwich bounds apply to reciprocal barriers only")
    if cert.alpha1 is None or cert.alpha2 is None:
        raise ContractError("certificate carries no sandwich bounds")
    rep = SandwichReport()
    for i, s in enumerate(samples):
        seg = s if isinstance(s, HistorySegment) else HistorySegment.constant(s, 0.0)
        m = membership(cert.safe_set, seg)
        if m.region != "interior":
            rep.notes.append(f"sample {i} skipped: {m.region} (h = {m.h:.3g})")
            continue
        inv_b = 1.0 / cert.barrier_value(seg)
        lo, hi = float(cert.alpha1(m.h)), float(cert.alpha2(m.h))
        viol = max(lo - inv_b, inv_b - hi, 0.0)
        rep.passed.append(viol <= 1e-12 * max(1.0, abs(inv_b)))
        rep.worst_violation = max(rep.worst_violation, viol)
    return rep


@dataclass
class InvarianceReport:
    min_h: float
    first_violation: Optional[float]

    @property
    def safe(self) -> bool:
        return self.min_h > 0.0


def invariance_monitor(traj: Trajectory, ss: Optional[SafeSetFunction] = None,
                       channel: str = "h") -> InvarianceReport:
    """Minimum of ``h`` along a trajectory and the first time with ``h <= 0``.

    The ``channel`` is used when present; otherwise ``ss`` (state kind) is
    evaluated on the recorded states.
    """
    if len(traj) == 0:
        raise DomainError("no data")
    if channel in traj.channels:
        h = traj.channels[channel]
    elif ss is not None and ss.kind == "state":
        h = np.array([ss(x) for x in traj.states])
    else:
        raise ContractError(f"trajectory has no {channel!r} channel and no state h was given")
    bad = np.nonzero(~(h > 0.0))[0]
    first = float(traj.times[bad[0]]) if bad.size else None
    return InvarianceReport(min_h=float(np.min(h)), first_violation=first)


def boundary_rate(ss: SafeSetFunction, sys: ControlAffineDelaySystem,
                  segments: Sequence[HistorySegment], controller: Callable) -> float:
    """Smallest closed-loop ``dh/dt`` over histories whose head is on the boundary.

    A positive value is the precondition under which the reciprocal and
    zeroing forms of a barrier are interchangeable (with ``B = 1/h``).
    """
    worst = math.inf
    for seg in segments:
        u = np.atleast_1d(controller(seg))
        rate = float(ss.head_grad(seg) @ (sys.f(seg) + sys.g(seg) @ u)) + ss.dplus_memory(seg)
        worst = min(worst, rate)
    return worst


class SoftminBarrier:
    """Smooth combination of several warning-region barriers.

    ``B(phi) = -ln sum_i exp(-gate_i * B_i)`` with
    ``B_i = (1 - eps_i / h_i)**2``. By default ``gate_i = 1`` exactly when
    ``h_i <= eps_i`` (inside the warning region); ``literal_gate=True``
    switches to ``gate_i = 1`` when ``h_i >= eps_i``. ``h_i`` is floored at
    ``1e-12``; every use of the floor increments :attr:`clamp_count`.

    Instances follow the separable-functional protocol and can be used as
    the barrier part of a sliding surface.
    """

    def __init__(self, parts: Sequence[Tuple[object, float]], literal_gate: bool = False):
        if not parts:
            raise ContractError("softmin barrier needs at least one part")
        for _, eps in parts:
            if not eps > 0:
                raise ContractError("warning margins must be positive")
        self.parts = [(p, float(e)) for p, e in parts]
        self.literal_gate = literal_gate
        self.clamp_count = 0
        self.state_based = all(getattr(p, "state_based", True) for p, _ in self.parts)

    def _gate(self, h: float, eps: float) -> float:
        return psgn(h - eps) if self.literal_gate else psgn(eps - h)

    def _terms(self, seg: HistorySegment):
        hs, gates, bs, dbs = [], [], [], []
        for part, eps in self.parts:
            h = part.value_seg(seg) if isinstance(seg, HistorySegment) else float(part(seg))
            if h < H_FLOOR:
                self.clamp_count += 1
                h = H_FLOOR
            r = 1.0 - eps / h
            hs.append(h)
            gates.append(self._gate(h, eps))
            bs.append(r * r)
            dbs.append(2.0 * r * eps / (h * h))
        return np.array(hs), np.array(gates), np.array(bs), np.array(dbs)

    def value_seg(self, seg: HistorySegment) -> float:
        _, gates, bs, _ = self._terms(seg)
        z = gates * bs
        zmin = float(np.min(z))  # log-sum-exp shift keeps floored parts finite
        return zmin - float(np.log(np.sum(np.exp(zmin - z))))

    __call__ = value_seg

    def _weights(self, seg):
        _, gates, bs, dbs = self._terms(seg)
        z = gates * bs
        e = np.exp(np.min(z) - z)
        # dB/dh_i = gate_i * e_i * dB_i/dh_i / sum(e)
        return gates * e * dbs / np.sum(e)

    def head_grad(self, seg: HistorySegment) -> np.ndarray:
        w = self._weights(seg)
        out = np.zeros(seg.dim)
        for wi, (part, _) in zip(w, self.parts):
            if wi != 0.0:
                out += wi * part.head_grad(seg)
        return out

    def dplus_memory(self, seg: HistorySegment) -> float:
        w = self._weights(seg)
        return float(sum(wi * part.dplus_memory(seg) for wi, (part, _) in zip(w, self.parts) if wi != 0.0))

    def gates(self, seg: HistorySegment) -> np.ndarray:
        return self._terms(seg)[1]


def softmin_barrier(parts: Sequence[Tuple[object, float]], literal_gate: bool = False) -> SoftminBarrier:
    """Build a :class:`SoftminBarrier` from ``(h_i, eps_i)`` pairs."""
    return SoftminBarrier(parts, literal_gate=literal_gate)
