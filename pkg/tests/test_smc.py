import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safestab.barrier import SafeSetFunction
from safestab.dde import integrate_closed_loop
from safestab.errors import ContractError, TransversalityError, UnsupportedSurfaceError
from safestab.functional import SeparableFunctional
from safestab.history import HistorySegment, integrate
from safestab.lyapunov import CLRF_II, KrasovskiiCertificate, RazumikhinCertificate
from safestab.scenarios import CCCParams, MasterSlaveParams, build_ccc, build_master_slave
from safestab.selftest import identity_residuals, random_projection_instance
from safestab.smc import (
    AdditiveCombiner,
    CustomCombiner,
    GainSpec,
    LinearCombiner,
    SlidingSurface,
    SMCController,
    equivalent_control,
    j_decomposition,
    projection_matrices,
    second_order_surface,
    sgn,
    smc_controller,
    surface_eval,
    surface_terms,
    surface_validity,
)
from safestab.sysmodel import ControlAffineDelaySystem, discrete_delay_system

CCC_U_AT_REFERENCE = 4.0 + 50.0 * math.log(15.0 / 14.0)


class _Const:
    """Separable functional with a fixed value and no gradient."""

    state_based = True

    def __init__(self, v):
        self.v = v

    def value_seg(self, seg):
        return self.v

    def head_grad(self, seg):
        return np.zeros(seg.dim)

    def dplus_memory(self, seg):
        return 0.0


def _square():
    return RazumikhinCertificate(CLRF_II, V=lambda x: float(x[0] ** 2),
                                 grad=lambda x: np.array([2.0 * x[0]]),
                                 gamma=lambda v: v, eta=lambda v: 0.5 * v)


def _fixed_system(f, g):
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    return ControlAffineDelaySystem(f.size, g.shape[1], 0.0, lambda seg: f, lambda seg: g)


def _linear_surface(H):
    H = np.asarray(H, dtype=float)
    return SlidingSurface(AdditiveCombiner(), SeparableFunctional(lambda x: float(H @ x),
                                                                  lambda x: H))


# ---------------------------------------------------------------------------
# surface evaluation and terms
# ---------------------------------------------------------------------------


def test_linear_combiner_symmetric_cancellation():
    surf = SlidingSurface(LinearCombiner(1.0, 1.0, 1e-300), _Const(3.0), _Const(3.0))
    assert surface_eval(surf, HistorySegment.constant([0.0], 0.0)).U == pytest.approx(0.0)


def test_linear_combiner_requires_positive_weights():
    with pytest.raises(ContractError):
        LinearCombiner(1.0, 1.0, 0.0)


def test_cruise_surface_value_at_reference_state():
    sc = build_ccc(CCCParams(xi=(20.0, 22.0, 50.0)))
    val = surface_eval(sc.surface, sc.xi)
    assert val.U == pytest.approx(CCC_U_AT_REFERENCE, rel=1e-12)
    assert val.U == pytest.approx(7.4496, abs=1e-4)
    assert val.W == pytest.approx(0.5 * val.U ** 2)


def test_additive_combiner_with_disabled_barrier():
    surf = SlidingSurface(AdditiveCombiner(beta=lambda b: 0.0, dbeta=lambda b: 0.0),
                          _square(), _Const(5.0))
    assert surface_eval(surf, HistorySegment.constant([3.0], 0.0)).U == pytest.approx(9.0)


def test_additive_combiner_requires_derivatives():
    with pytest.raises(ContractError):
        AdditiveCombiner(alpha=lambda v: v)


def test_surface_terms_scalar_example():
    sys = discrete_delay_system(lambda x0, x1: x1, lambda x0, x1: np.ones((1, 1)), n=1, m=1,
                                delays=(1.0,))
    surf = SlidingSurface(AdditiveCombiner(), _square())
    H, F, G, L = surface_terms(surf, sys, HistorySegment.constant([1.0], 1.0))
    np.testing.assert_allclose(H, [2.0])
    assert F == pytest.approx(2.0)
    np.testing.assert_allclose(G, [2.0])
    assert L == 0.0


def test_surface_terms_constant_surface():
    sys = _fixed_system([1.0, -2.0], [[1.0], [0.5]])
    surf = SlidingSurface(CustomCombiner(lambda V, B: 4.0, lambda V, B: 0.0, lambda V, B: 0.0),
                          _square())
    H, F, G, L = surface_terms(surf, sys, HistorySegment.constant([1.0, 1.0], 0.0))
    np.testing.assert_array_equal(H, [0.0, 0.0])
    assert F == 0.0 and L == 0.0
    np.testing.assert_array_equal(G, [0.0])


def test_surface_terms_krasovskii_memory_rate():
    cert = KrasovskiiCertificate(
        V1=lambda x: 0.0, grad1=lambda x: np.zeros(1),
        V2=lambda seg: integrate(seg, lambda v: float(v @ v)),
        dplus_V2=lambda seg: float(seg.current @ seg.current - seg.eval(-1.0) @ seg.eval(-1.0)),
        gamma=lambda v: v,
    )
    sys = discrete_delay_system(lambda x0, x1: x1, lambda x0, x1: np.ones((1, 1)), n=1, m=1,
                                delays=(1.0,))
    surf = SlidingSurface(AdditiveCombiner(), cert)
    seg = HistorySegment([-1.0, 0.0], [2.0, 1.0])
    assert surface_terms(surf, sys, seg).L == pytest.approx(-3.0)


def test_mixed_krasovskii_lyapunov_and_state_barrier():
    sc = build_master_slave(MasterSlaveParams())
    t = surface_terms(sc.surface, sc.sys, sc.xi)
    # constant history: the memory rate vanishes and H is the head gradient of e^T e
    assert t.L == pytest.approx(0.0)
    np.testing.assert_allclose(t.H, 2.0 * np.asarray(sc.xi.current))


def test_surface_derivative_matches_closed_loop_finite_difference():
    sc = build_ccc(CCCParams(xi=(20.0, 22.0, 50.0), leader_accel=lambda t: 0.0))
    seg = sc.xi
    u = np.array([0.3])
    t = surface_terms(sc.surface, sc.sys, seg)
    pred = t.F + float(t.G @ u) + t.L
    dt = 1e-6
    x1 = seg.current + dt * (sc.sys.f(seg) + sc.sys.g(seg) @ u)
    fd = (sc.surface.value_at_state(x1) - sc.surface.value_at_state(seg.current)) / dt
    assert pred == pytest.approx(fd, rel=1e-4)


# ---------------------------------------------------------------------------
# projection algebra
# ---------------------------------------------------------------------------


def test_j_decomposition_hand_example():
    sys = _fixed_system([1.0, 0.0], [[0.0], [1.0]])
    M, J1, J2, J3 = j_decomposition(sys, HistorySegment.constant([0.0, 0.0], 0.0), [0.0, 1.0])
    np.testing.assert_allclose(M, np.diag([1.0, 0.0]))
    np.testing.assert_allclose(J1, [[0.0, 1.0], [-1.0, 0.0]])
    np.testing.assert_allclose(M @ [1.0, 0.0], J1 @ [0.0, 1.0])
    np.testing.assert_allclose(J2, [[0.0, -0.5], [0.5, 0.0]])
    np.testing.assert_allclose(J3, [[0.0, 0.5], [0.5, 0.0]])
    np.testing.assert_allclose((J3 - J2) @ [0.0, 1.0], [1.0, 0.0])


def test_j_decomposition_transversality_error():
    sys = _fixed_system([1.0, 0.0], [[0.0], [1.0]])
    with pytest.raises(TransversalityError):
        j_decomposition(sys, HistorySegment.constant([0.0, 0.0], 0.0), [1.0, 0.0])


def test_projection_identities_random():
    rng = np.random.default_rng(42)
    for _ in range(200):
        res = identity_residuals(*random_projection_instance(rng))
        assert max(res.values()) <= 1e-9, res


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_projection_matrix_idempotent_and_annihilates_input_direction(seed):
    f, g, H = random_projection_instance(np.random.default_rng(seed), min_G=1e-2)
    M = projection_matrices(f, g, H).M
    G = H @ g
    gG = g @ G
    scale = 1.0 + np.linalg.norm(gG) * np.linalg.norm(H) / float(G @ G)  # size of the terms of M
    np.testing.assert_allclose(H @ M, 0.0, atol=1e-12 * np.linalg.norm(H) * scale)
    np.testing.assert_allclose(M @ gG, 0.0, atol=1e-12 * np.linalg.norm(gG) * scale)
    np.testing.assert_allclose(M @ M, M, atol=1e-12 * scale ** 2)


# ---------------------------------------------------------------------------
# equivalent control and the sliding-mode law
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "f, L, expected",
    [([1.0, 0.0], 0.0, 0.0), ([0.0, 1.0], 0.0, -1.0), ([1.0, 0.0], 3.0, -3.0)],
)
def test_equivalent_control_examples(f, L, expected):
    sys = _fixed_system(f, [[0.0], [1.0]])
    lyap = SeparableFunctional(lambda x: float(x[1]), lambda x: np.array([0.0, 1.0]))
    if L:
        lyap = KrasovskiiCertificate(V1=lambda x: float(x[1]), grad1=lambda x: np.array([0.0, 1.0]),
                                     V2=lambda seg: 0.0, dplus_V2=lambda seg: L, gamma=lambda v: v)
    surf = SlidingSurface(AdditiveCombiner(), lyap)
    u = equivalent_control(surf, sys, HistorySegment.constant([0.0, 0.0], 0.0))
    assert u[0] == pytest.approx(expected)


def test_equivalent_control_zeroes_surface_rate():
    rng = np.random.default_rng(7)
    for _ in range(20):
        f, g, H = random_projection_instance(rng, min_G=0.1)
        sys = _fixed_system(f, g)
        surf = _linear_surface(H)
        seg = HistorySegment.constant(np.zeros(f.size), 0.0)
        u = equivalent_control(surf, sys, seg)
        assert float(H @ (f + g @ u)) == pytest.approx(0.0, abs=1e-9 * (1 + np.linalg.norm(f) * np.linalg.norm(H)))


def test_sign_gain_example():
    sys = _fixed_system([1.0, 0.0], [[0.0], [1.0]])
    surf = SlidingSurface(AdditiveCombiner(), SeparableFunctional(
        lambda x: float(x[1]) + 1.0, lambda x: np.array([0.0, 1.0])))
    u = smc_controller(surf, sys, GainSpec.sign(5.0), HistorySegment.constant([0.0, 0.0], 0.0))
    assert u[0] == pytest.approx(-5.0)


def test_sign_gain_on_surface_gives_equivalent_control():
    assert sgn(0.0) == 0.0
    sys = _fixed_system([0.0, 1.0], [[0.0], [1.0]])
    surf = _linear_surface([0.0, 1.0])
    seg = HistorySegment.constant([0.0, 0.0], 0.0)
    u = smc_controller(surf, sys, GainSpec.sign(5.0), seg)
    np.testing.assert_allclose(u, equivalent_control(surf, sys, seg))


def test_krasovskii_gain_on_master_slave_surface():
    sc = build_master_slave(MasterSlaveParams())
    U = sc.surface.value_seg(sc.xi)
    assert GainSpec.krasovskii(0.025).evaluate(sc.surface, sc.xi) == pytest.approx(0.025 * U)


def test_razumikhin_gain_form_and_sliding_band():
    sc = build_ccc(CCCParams(xi=(20.0, 22.0, 50.0)))
    gain = GainSpec.razumikhin(2.2, 2.0)
    U = sc.surface.value_seg(sc.xi)
    # constant history: sup |U| = U(phi(0))
    assert gain.evaluate(sc.surface, sc.xi) == pytest.approx(2.2 * U - 2.0 * U * U / U)
    assert gain.evaluate(sc.surface, sc.xi, U=0.0) == 0.0


def test_gain_spec_invariants():
    with pytest.raises(ContractError):
        GainSpec.sign(0.0)
    with pytest.raises(ContractError):
        GainSpec.sigmoid(1.0, 0.0)
    with pytest.raises(ContractError):
        GainSpec.krasovskii(-1.0)
    with pytest.raises(ContractError):
        GainSpec.razumikhin(2.0, 2.0)  # alpha(v) = 2v is not below K1 v = 2v
    assert GainSpec.sigmoid(2.0, 0.5).evaluate(None, None, U=0.5) == pytest.approx(1.0)


def test_controller_invariant_under_positive_rescaling_of_surface():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f, g, H = random_projection_instance(rng, min_G=0.1)
        sys = _fixed_system(f, g)
        seg = HistorySegment.constant(rng.normal(size=f.size), 0.0)
        c = float(rng.uniform(0.1, 10.0))
        gain = GainSpec.krasovskii(1.0)
        u1 = smc_controller(_linear_surface(H), sys, gain, seg)
        # rescaling H also rescales U, so K/|G|^2 scales as 1/c, matching G^T / |G|^2
        u2 = smc_controller(_linear_surface(c * H), sys, gain, seg)
        np.testing.assert_allclose(u1, u2, rtol=1e-9, atol=1e-12)


def test_controller_floor_clamps_and_counts():
    sys = _fixed_system([1.0, 0.0], [[0.0], [1.0]])
    surf = _linear_surface([1.0, 1e-10])
    seg = HistorySegment.constant([1.0, 0.0], 0.0)
    ctrl = SMCController(surf, sys, GainSpec.sign(1.0), floor=1e-8)
    u = ctrl(seg)
    assert np.all(np.isfinite(u)) and ctrl.near_floor_count == 1
    assert ctrl.last["near_floor"] == 1.0
    with pytest.raises(TransversalityError):
        smc_controller(surf, sys, GainSpec.sign(1.0), seg)


def test_smooth_gains_make_w_nonincreasing():
    sys = discrete_delay_system(lambda x0, x1: -0.5 * x0 + 0.3 * x1,
                                lambda x0, x1: np.ones((1, 1)), n=1, m=1, delays=(1.0,))
    surf = SlidingSurface(AdditiveCombiner(), _square(), state_value=lambda P: P[:, 0] ** 2)

    for gain in (GainSpec.sigmoid(2.0, 0.1), GainSpec.krasovskii(1.0), GainSpec.razumikhin(2.2, 2.0)):
        ctrl = SMCController(surf, sys, gain)
        traj = integrate_closed_loop(sys, ctrl, HistorySegment.constant([2.0], 1.0), 1e-3, 2.0,
                                     {"W": lambda s: 0.5 * surf.value_seg(s) ** 2})
        dW = np.diff(traj.channel("W")) / traj.dt
        # 10 dt times a local Lipschitz bound of the closed loop on this range
        assert np.max(dW) <= 10 * traj.dt * 100.0, gain.describe()


# ---------------------------------------------------------------------------
# validity checks and second-order surfaces
# ---------------------------------------------------------------------------


def test_validity_initial_bound_linear_combiner():
    # U = a V - b B + c = 0 - 2.55 + 10 = 7.45
    surf = SlidingSurface(LinearCombiner(1.0, 1.0, 10.0), _Const(0.0), _Const(2.55))
    xi = HistorySegment.constant([0.0], 0.0)
    assert surface_eval(surf, xi).U == pytest.approx(7.45)
    rep = surface_validity(surf, xi)
    assert rep.conditions["initial_bound"][0] is True
    assert rep.conditions["initial_bound"][1] == pytest.approx(10.0 - 7.45)
    bad = SlidingSurface(LinearCombiner(1.0, 1.0, 5.0), _Const(4.0), _Const(0.0))
    assert surface_validity(bad, xi).conditions["initial_bound"][0] is False


def test_validity_reciprocal_barrier_dominates_on_boundary():
    sc = build_ccc(CCCParams(xi=(20.0, 22.0, 50.0)))
    boundary = [HistorySegment.constant([v, 22.0, 1.8 * v], 0.0) for v in (5.0, 20.0, 30.0)]
    rep = surface_validity(sc.surface, HistorySegment.constant([20.0, 22.0, 50.0], 0.0), boundary)
    assert rep.conditions["boundary_dominance"][0] is True
    assert math.isinf(rep.conditions["boundary_dominance"][1])


def test_validity_flags_boundary_initial_history():
    safe = SafeSetFunction.state(lambda x: float(x[0]), lambda x: np.array([1.0]))
    surf = SlidingSurface(LinearCombiner(1.0, 1.0, 1.0), _square(), safe)
    xi = HistorySegment.constant([0.0], 0.0)
    rep = surface_validity(surf, xi, [xi])
    assert any("boundary" in f for f in rep.flags)
    assert any("equality" in f for f in rep.flags)


def test_validity_roots_interior():
    safe = SafeSetFunction.state(lambda x: float(x[0]), lambda x: np.array([1.0]))
    surf = SlidingSurface(LinearCombiner(1.0, 1.0, 1.0), _square(), safe)
    rep = surface_validity(surf, HistorySegment.constant([1.0], 0.0),
                           root_samples=[HistorySegment.constant([0.5], 0.0)])
    assert rep.conditions["roots_interior"][0] is True


def _double_integrator():
    return discrete_delay_system(lambda x0: np.array([x0[1], 0.0]),
                                 lambda x0: np.array([[0.0], [1.0]]), n=2, m=1, delays=())


def test_second_order_surface_restores_transversality():
    sys = _double_integrator()
    base = _linear_surface([1.0, 0.0])
    seg = HistorySegment.constant([0.7, -0.4], 0.0)
    assert np.linalg.norm(surface_terms(base, sys, seg).G) == 0.0
    bar = second_order_surface(base, sys, 2.0, 3.0)
    assert bar.value_seg(seg) == pytest.approx(2.0 * 0.7 + 3.0 * (-0.4))
    np.testing.assert_allclose(bar.terms(sys, seg).G, [3.0], rtol=1e-7)
    u = smc_controller(bar, sys, GainSpec.sign(1.0), seg)
    assert np.all(np.isfinite(u))


def test_second_order_surface_rejections():
    sys = _double_integrator()
    with pytest.raises(ValueError):
        second_order_surface(_linear_surface([1.0, 0.0]), sys, 1.0, 0.0)
    cert = KrasovskiiCertificate(V1=lambda x: 0.0, V2=lambda seg: 0.0, dplus_V2=lambda seg: 0.0,
                                 gamma=lambda v: v)
    with pytest.raises(UnsupportedSurfaceError):
        second_order_surface(SlidingSurface(AdditiveCombiner(), cert), sys, 1.0, 1.0)
