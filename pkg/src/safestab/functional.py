"""Smoothly separable functionals ``F(phi) = F1(phi(0)) + F2(phi)``.

Certificates, safe-set functions and sliding surfaces all expose the same
three-method protocol, which is what the controllers need:

``value_seg(seg)``
    The functional value on a history.
``head_grad(seg)``
    Gradient of the state part ``F1`` at ``phi(0)``; it multiplies ``x'(t)``
    in the derivative along solutions.
``dplus_memory(seg)``
    Upper Dini derivative of the memory part ``F2`` along solutions. It must
    not depend on the input.

plus a ``state_based`` flag that is true when ``F2`` is absent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .history import HistorySegment


def fd_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central finite-difference gradient with step ``1e-6 * (1 + |x|)``."""
    x = np.asarray(x, dtype=float)
    h = 1e-6 * (1.0 + np.linalg.norm(x))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


@dataclass(frozen=True)
class SeparableFunctional:
    """Generic separable functional built from closures.

    Parameters
    ----------
    head : callable
        ``F1(x)``.
    head_gradient : callable, optional
        Gradient of ``F1``; central differences are used when omitted unless
        ``allow_fd`` is false.
    memory : callable, optional
        ``F2(seg)``; absent means the functional is a plain state function.
    memory_dplus : callable, optional
        Dini derivative of ``F2`` along solutions; required with ``memory``.
    """

    head: Callable
    head_gradient: Optional[Callable] = None
    memory: Optional[Callable] = None
    memory_dplus: Optional[Callable] = None
    allow_fd: bool = True

    def __post_init__(self):
        from .errors import ContractError

        if (self.memory is None) != (self.memory_dplus is None):
            raise ContractError("memory part and its Dini derivative must be given together")
        if self.head_gradient is None and not self.allow_fd:
            raise ContractError("no gradient supplied and finite differences are disabled")

    @property
    def state_based(self) -> bool:
        return self.memory is None

    @property
    def uses_fd_gradient(self) -> bool:
        return self.head_gradient is None

    def head_value(self, x) -> float:
        return float(self.head(np.asarray(x, dtype=float)))

    def value_seg(self, seg: HistorySegment) -> float:
        v = self.head_value(seg.current)
        if self.memory is not None:
            v += float(self.memory(seg))
        return v

    def head_grad(self, seg: HistorySegment) -> np.ndarray:
        x = seg.current
        if self.head_gradient is not None:
            return np.asarray(self.head_gradient(x), dtype=float).reshape(x.shape)
        return fd_gradient(self.head_value, x)

    def dplus_memory(self, seg: HistorySegment) -> float:
        if self.memory_dplus is None:
            return 0.0
        return float(self.memory_dplus(seg))


class ZeroFunctional:
    """The functional that is identically zero (used when a surface has no barrier)."""

    state_based = True
    uses_fd_gradient = False

    def value_seg(self, seg: HistorySegment) -> float:
        return 0.0

    def head_grad(self, seg: HistorySegment) -> np.ndarray:
        return np.zeros(seg.dim)

    def dplus_memory(self, seg: HistorySegment) -> float:
        return 0.0
