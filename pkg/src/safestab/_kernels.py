"""Numeric inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin. Set ``SAFESTAB_DISABLE_NUMBA=1`` before
import to force the numpy path (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SAFESTAB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    _njit = numba.njit(cache=True, nogil=True)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

    def _njit(fn):
        return fn


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _locate_np(times, t):
    n = times.shape[0]
    i = int(np.searchsorted(times, t, side="right")) - 1
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    return i


def hermite_one_np(times, values, dleft, dright, t):
    """Evaluate the piecewise cubic Hermite interpolant at a single time."""
    if times.shape[0] == 1:
        return values[0].copy()
    i = _locate_np(times, t)
    h = times[i + 1] - times[i]
    s = (t - times[i]) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return h00 * values[i] + h10 * h * dleft[i] + h01 * values[i + 1] + h11 * h * dright[i]


def hermite_many_np(times, values, dleft, dright, ts):
    ts = np.asarray(ts, dtype=float)
    if times.shape[0] == 1:
        return np.repeat(values[:1], ts.shape[0], axis=0)
    idx = np.searchsorted(times, ts, side="right") - 1
    idx = np.clip(idx, 0, times.shape[0] - 2)
    h = (times[idx + 1] - times[idx])[:, None]
    s = ((ts - times[idx])[:, None]) / h
    s2 = s * s
    s3 = s2 * s
    return (
        (2.0 * s3 - 3.0 * s2 + 1.0) * values[idx]
        + (s3 - 2.0 * s2 + s) * h * dleft[idx]
        + (-2.0 * s3 + 3.0 * s2) * values[idx + 1]
        + (s3 - s2) * h * dright[idx]
    )


def hermite_deriv_many_np(times, values, dleft, dright, ts):
    ts = np.asarray(ts, dtype=float)
    if times.shape[0] == 1:
        return np.zeros((ts.shape[0], values.shape[1]))
    idx = np.searchsorted(times, ts, side="right") - 1
    idx = np.clip(idx, 0, times.shape[0] - 2)
    h = (times[idx + 1] - times[idx])[:, None]
    s = ((ts - times[idx])[:, None]) / h
    s2 = s * s
    return (
        (6.0 * s2 - 6.0 * s) * values[idx] / h
        + (3.0 * s2 - 4.0 * s + 1.0) * dleft[idx]
        + (-6.0 * s2 + 6.0 * s) * values[idx + 1] / h
        + (3.0 * s2 - 2.0 * s) * dright[idx]
    )


def _interp_table_np(xs, ys, v):
    # linear interpolation with linear extrapolation on both ends
    if v <= xs[0]:
        slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        return ys[0] + slope * (v - xs[0])
    if v >= xs[-1]:
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        return ys[-1] + slope * (v - xs[-1])
    return float(np.interp(v, xs, ys))


def comparison_pair_np(ax, ay, bx, by, eps1, eps2, hist, window, dt, nsteps):
    """Integrate the two extremal scalar delay equations of the comparison lemma.

    ``X' = -a(X) + eps1*b(max window X)`` and the same for ``Y`` with ``eps2``.
    ``a`` and ``b`` are piecewise-linear tables. ``hist`` holds the shared
    history on the ``window + 1`` grid points ending at t = 0.
    """
    total = window + 1 + nsteps
    X = np.empty(total)
    Y = np.empty(total)
    X[: window + 1] = hist
    Y[: window + 1] = hist
    out = (X, Y)
    for which, eps in ((0, eps1), (1, eps2)):
        Z = out[which]
        for k in range(window, window + nsteps):
            past = Z[k - window : k].max()

            def rhs(z):
                m = max(past, z)
                return -_interp_table_np(ax, ay, z) + eps * _interp_table_np(bx, by, m)

            z0 = Z[k]
            k1 = rhs(z0)
            k2 = rhs(z0 + 0.5 * dt * k1)
            k3 = rhs(z0 + 0.5 * dt * k2)
            k4 = rhs(z0 + dt * k3)
            Z[k + 1] = z0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return X[window:], Y[window:]


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------


@_njit
def _locate_nb(times, t):
    n = times.shape[0]
    lo = 0
    hi = n - 1
    if t >= times[n - 1]:
        return n - 2
    if t <= times[0]:
        return 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if times[mid] <= t:
            lo = mid
        else:
            hi = mid
    return lo


@_njit
def hermite_one_nb(times, values, dleft, dright, t):
    nd = values.shape[1]
    out = np.empty(nd)
    if times.shape[0] == 1:
        for j in range(nd):
            out[j] = values[0, j]
        return out
    i = _locate_nb(times, t)
    h = times[i + 1] - times[i]
    s = (t - times[i]) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    for j in range(nd):
        out[j] = (
            h00 * values[i, j]
            + h10 * h * dleft[i, j]
            + h01 * values[i + 1, j]
            + h11 * h * dright[i, j]
        )
    return out


@_njit
def hermite_many_nb(times, values, dleft, dright, ts):
    m = ts.shape[0]
    nd = values.shape[1]
    out = np.empty((m, nd))
    if times.shape[0] == 1:
        for k in range(m):
            for j in range(nd):
                out[k, j] = values[0, j]
        return out
    for k in range(m):
        i = _locate_nb(times, ts[k])
        h = times[i + 1] - times[i]
        s = (ts[k] - times[i]) / h
        s2 = s * s
        s3 = s2 * s
        h00 = 2.0 * s3 - 3.0 * s2 + 1.0
        h10 = (s3 - 2.0 * s2 + s) * h
        h01 = -2.0 * s3 + 3.0 * s2
        h11 = (s3 - s2) * h
        for j in range(nd):
            out[k, j] = (h00 * values[i, j] + h10 * dleft[i, j]
                         + h01 * values[i + 1, j] + h11 * dright[i, j])
    return out


@_njit
def hermite_deriv_many_nb(times, values, dleft, dright, ts):
    m = ts.shape[0]
    nd = values.shape[1]
    out = np.zeros((m, nd))
    if times.shape[0] == 1:
        return out
    for k in range(m):
        i = _locate_nb(times, ts[k])
        h = times[i + 1] - times[i]
        s = (ts[k] - times[i]) / h
        s2 = s * s
        for j in range(nd):
            out[k, j] = (
                (6.0 * s2 - 6.0 * s) * values[i, j] / h
                + (3.0 * s2 - 4.0 * s + 1.0) * dleft[i, j]
                + (-6.0 * s2 + 6.0 * s) * values[i + 1, j] / h
                + (3.0 * s2 - 2.0 * s) * dright[i, j]
            )
    return out


@_njit
def _interp_table_nb(xs, ys, v):
    n = xs.shape[0]
    if v <= xs[0]:
        return ys[0] + (ys[1] - ys[0]) / (xs[1] - xs[0]) * (v - xs[0])
    if v >= xs[n - 1]:
        return ys[n - 1] + (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]) * (v - xs[n - 1])
    i = _locate_nb(xs, v)
    w = (v - xs[i]) / (xs[i + 1] - xs[i])
    return ys[i] * (1.0 - w) + ys[i + 1] * w


@_njit
def _cmp_rhs_nb(ax, ay, bx, by, eps, past, z):
    m = past if past > z else z
    return -_interp_table_nb(ax, ay, z) + eps * _interp_table_nb(bx, by, m)


@_njit
def _cmp_single_nb(ax, ay, bx, by, eps, hist, window, dt, nsteps):
    Z = np.empty(window + 1 + nsteps)
    for k in range(window + 1):
        Z[k] = hist[k]
    for k in range(window, window + nsteps):
        past = Z[k - window]
        for j in range(k - window + 1, k):
            if Z[j] > past:
                past = Z[j]
        z0 = Z[k]
        k1 = _cmp_rhs_nb(ax, ay, bx, by, eps, past, z0)
        k2 = _cmp_rhs_nb(ax, ay, bx, by, eps, past, z0 + 0.5 * dt * k1)
        k3 = _cmp_rhs_nb(ax, ay, bx, by, eps, past, z0 + 0.5 * dt * k2)
        k4 = _cmp_rhs_nb(ax, ay, bx, by, eps, past, z0 + dt * k3)
        Z[k + 1] = z0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Z[window:]


@_njit
def comparison_pair_nb(ax, ay, bx, by, eps1, eps2, hist, window, dt, nsteps):
    X = _cmp_single_nb(ax, ay, bx, by, eps1, hist, window, dt, nsteps)
    Y = _cmp_single_nb(ax, ay, bx, by, eps2, hist, window, dt, nsteps)
    return X, Y


if HAVE_NUMBA:
    hermite_one = hermite_one_nb
    hermite_many = hermite_many_nb
    hermite_deriv_many = hermite_deriv_many_nb
    comparison_pair = comparison_pair_nb
else:
    hermite_one = hermite_one_np
    hermite_many = hermite_many_np
    hermite_deriv_many = hermite_deriv_many_np
    comparison_pair = comparison_pair_np

BACKEND = "numba" if HAVE_NUMBA else "numpy"
