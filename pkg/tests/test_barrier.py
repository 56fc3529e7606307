import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safestab.barrier import (
    R_CBRF,
    Z_CBKF,
    Z_CBRF,
    BarrierCertificate,
    SafeSetFunction,
    barrier_margin,
    boundary_rate,
    invariance_monitor,
    membership,
    psgn,
    sandwich_check,
    softmin_barrier,
)
from safestab.dde import Trajectory
from safestab.errors import ContractError, DomainError
from safestab.history import HistorySegment
from safestab.sysmodel import ComparisonFunction, discrete_delay_system, linear


def _headway():
    return SafeSetFunction.state(lambda x: x[2] - 1.8 * x[0], lambda x: np.array([-1.8, 0.0, 1.0]))


def _obstacle():
    return SafeSetFunction.state(lambda x: (x[0] ** 2 - 3.0) ** 2 + x[1] ** 2 - 4.0)


def _ident(v):
    return v


def test_membership_examples():
    m = membership(_headway(), np.array([20.0, 0.0, 50.0]))
    assert m.region == "interior" and m.h == pytest.approx(14.0)
    m = membership(_headway(), np.array([20.0, 0.0, 36.0]))
    assert m.region == "boundary" and m.h == pytest.approx(0.0, abs=1e-12)
    m = membership(_obstacle(), HistorySegment.constant([math.sqrt(3.0), 0.0], 1.0))
    assert m.region == "exterior" and m.h == pytest.approx(-4.0)


def test_psgn_convention():
    assert psgn(0.0) == 1.0 and psgn(2.0) == 1.0 and psgn(-1e-300) == 0.0


def _reciprocal(B, alpha2=linear(1.0)):
    h = SafeSetFunction.state(lambda x: float(x[0]))
    return BarrierCertificate(R_CBRF, h, gamma=_ident, eta=lambda v: 0.5 * v, B=B,
                              alpha1=linear(1.0), alpha2=alpha2)


def test_sandwich_exact_reciprocal_passes():
    rep = sandwich_check(_reciprocal(lambda x: 1.0 / x[0]),
                         [np.array([v]) for v in (0.1, 1.0, 7.0)])
    assert rep.ok and rep.worst_violation == 0.0


def test_sandwich_log_barrier_at_fourteen():
    cert = _reciprocal(lambda x: math.log1p(1.0 / x[0]),
                       alpha2=ComparisonFunction(lambda v: v + 1.0))
    rep = sandwich_check(cert, [np.array([14.0])])
    assert rep.ok
    assert 1.0 / math.log(15.0 / 14.0) == pytest.approx(14.4943, abs=1e-4)


def test_sandwich_squared_reciprocal_fails():
    rep = sandwich_check(_reciprocal(lambda x: 1.0 / x[0] ** 2), [np.array([2.0])])
    assert not rep.ok
    assert rep.worst_violation == pytest.approx(2.0)


def test_sandwich_skips_non_interior_samples():
    rep = sandwich_check(_reciprocal(lambda x: 1.0 / x[0]), [np.array([0.0]), np.array([1.0])])
    assert rep.ok and len(rep.passed) == 1 and len(rep.notes) == 1


def _integrator():
    return discrete_delay_system(lambda x0: np.zeros(1), lambda x0: np.ones((1, 1)), n=1, m=1,
                                 delays=())


def _zeroing(variant=Z_CBRF):
    h = SafeSetFunction.state(lambda x: float(x[0]), lambda x: np.array([1.0]))
    return BarrierCertificate(variant, h, gamma=_ident, eta=lambda v: 0.5 * v)


def test_zeroing_margin_examples():
    cert, sys = _zeroing(), _integrator()
    seg = HistorySegment.constant([1.0], 0.0)
    assert barrier_margin(cert, sys, seg, [0.0]) == pytest.approx(-0.5)
    assert barrier_margin(cert, sys, seg, [-1.0]) == pytest.approx(0.5)


def test_krasovskii_zeroing_reduces_to_state_case():
    h = SafeSetFunction.separable(lambda x: float(x[0]), lambda x: np.array([1.0]))
    cert = BarrierCertificate(Z_CBKF, h, gamma=_ident)
    assert barrier_margin(cert, _integrator(), HistorySegment.constant([50.0], 0.0), [0.0]) < 0


def test_reciprocal_margin_outside_domain_raises():
    cert = _reciprocal(lambda x: 1.0 / x[0])
    with pytest.raises(DomainError):
        barrier_margin(cert, _integrator(), HistorySegment.constant([0.0], 0.0), [0.0])


def test_reciprocal_margin_value():
    h = SafeSetFunction.state(lambda x: float(x[0]))
    cert = BarrierCertificate(R_CBRF, h, gamma=_ident, eta=lambda v: 0.5 * v,
                              B=lambda x: 1.0 / x[0], grad_B=lambda x: np.array([-1.0 / x[0] ** 2]))
    seg = HistorySegment.constant([2.0], 0.0)
    # LHS = -u / 4, RHS = 2 - 1 = 1
    assert barrier_margin(cert, _integrator(), seg, [4.0]) == pytest.approx(-2.0)


@settings(max_examples=50, deadline=None)
@given(u1=st.floats(-10, 10), u2=st.floats(-10, 10), x=st.floats(0.1, 5))
def test_barrier_margin_affine_in_input(u1, u2, x):
    cert, sys = _zeroing(), _integrator()
    seg = HistorySegment.constant([x], 0.0)
    m = lambda u: barrier_margin(cert, sys, seg, [u])  # noqa: E731
    assert m(u1 + u2) - m(u1) - m(u2) + m(0.0) == pytest.approx(0.0, abs=1e-9)


def test_mutual_admissibility_reciprocal_and_zeroing():
    # B = 1/h with gamma = eta = 0: both demand dh/dt > 0 (zeroing) / dB/dt < 0 (reciprocal)
    h = SafeSetFunction.state(lambda x: float(x[0]), lambda x: np.array([1.0]))
    zero = lambda v: 0.0  # noqa: E731
    rcert = BarrierCertificate(R_CBRF, h, gamma=zero, eta=zero, B=lambda x: 1.0 / x[0],
                               grad_B=lambda x: np.array([-1.0 / x[0] ** 2]))
    zcert = BarrierCertificate(Z_CBRF, h, gamma=zero, eta=zero)
    sys = _integrator()
    for x in (0.5, 1.0, 3.0):
        seg = HistorySegment.constant([x], 0.0)
        for u in (-2.0, -0.1, 0.3, 1.0):
            r = barrier_margin(rcert, sys, seg, [u])
            z = barrier_margin(zcert, sys, seg, [u])
            assert np.sign(r) == np.sign(z)
    assert boundary_rate(h, sys, [HistorySegment.constant([0.0], 0.0)], lambda s: [1.0]) > 0


def test_invariance_monitor_examples():
    ok = Trajectory([0.0, 0.1, 0.2], [[0.0]] * 3, [[0.0]] * 3, {"h": [1.0, 1.0, 1.0]})
    rep = invariance_monitor(ok)
    assert rep.safe and rep.min_h == 1.0 and rep.first_violation is None
    bad = Trajectory([0.0, 0.1, 0.2, 0.3], [[0.0]] * 4, [[0.0]] * 4, {"h": [1.0, 0.5, -0.1, 0.2]})
    rep = invariance_monitor(bad)
    assert not rep.safe and rep.first_violation == pytest.approx(0.2)
    with pytest.raises(DomainError, match="no data"):
        invariance_monitor(Trajectory([], np.zeros((0, 1)), np.zeros((0, 1))))


def test_invariance_monitor_from_states():
    traj = Trajectory([0.0, 1.0], [[1.0], [2.0]], [[0.0], [0.0]])
    rep = invariance_monitor(traj, SafeSetFunction.state(lambda x: 3.0 - x[0]))
    assert rep.min_h == pytest.approx(1.0)


def test_invariance_monitor_prefix_monotone():
    rng = np.random.default_rng(1)
    h = np.cumsum(rng.normal(size=50)) + 5.0
    traj = Trajectory(np.arange(50) * 0.1, np.zeros((50, 1)), np.zeros((50, 1)), {"h": h})
    if invariance_monitor(traj).safe:
        for k in range(1, 50):
            pref = Trajectory(traj.times[:k], traj.states[:k], traj.inputs[:k], {"h": h[:k]})
            assert invariance_monitor(pref).safe


def _clearance(value):
    return SafeSetFunction.state(lambda x: value)


def test_softmin_both_gates_off():
    b = softmin_barrier([(_clearance(2.0), 0.84), (_clearance(3.0), 0.84)])
    assert b(HistorySegment.constant([0.0], 0.0)) == pytest.approx(-math.log(2.0))


def test_softmin_one_gate_on():
    b = softmin_barrier([(_clearance(0.42), 0.84), (_clearance(2.0), 0.84)])
    assert b(HistorySegment.constant([0.0], 0.0)) == pytest.approx(-math.log(1.0 + math.exp(-1.0)))
    assert b(HistorySegment.constant([0.0], 0.0)) == pytest.approx(-0.3133, abs=1e-4)


def test_softmin_single_part_on_warning_boundary():
    b = softmin_barrier([(_clearance(0.84), 0.84)])
    assert b(HistorySegment.constant([0.0], 0.0)) == pytest.approx(0.0, abs=1e-15)


def test_softmin_literal_gate_inverts_activation():
    seg = HistorySegment.constant([0.0], 0.0)
    b = softmin_barrier([(_clearance(0.42), 0.84)], literal_gate=True)
    np.testing.assert_array_equal(b.gates(seg), [0.0])
    b = softmin_barrier([(_clearance(0.42), 0.84)])
    np.testing.assert_array_equal(b.gates(seg), [1.0])


def test_softmin_floor_counts_clamps():
    b = softmin_barrier([(_clearance(0.0), 0.84)])
    assert np.isfinite(b(HistorySegment.constant([0.0], 0.0)))
    assert b.clamp_count == 1


def test_softmin_nonincreasing_in_clearance_inside_warning_region():
    ss = SafeSetFunction.state(lambda x: float(x[0]), lambda x: np.array([1.0]))
    b = softmin_barrier([(ss, 0.84), (_clearance(5.0), 0.84)])
    hs = np.linspace(0.05, 0.83, 40)
    vals = [b(HistorySegment.constant([h], 0.0)) for h in hs]
    assert np.all(np.diff(vals) <= 1e-15)
    # analytic head gradient agrees with finite differences
    for h in (0.1, 0.4, 0.8):
        d = 1e-6
        fd = (b(HistorySegment.constant([h + d], 0.0)) - b(HistorySegment.constant([h - d], 0.0))) / (2 * d)
        assert b.head_grad(HistorySegment.constant([h], 0.0))[0] == pytest.approx(fd, rel=1e-5)


def test_softmin_rejects_nonpositive_margin():
    with pytest.raises(ContractError):
        softmin_barrier([(_clearance(1.0), 0.0)])
