import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safestab.errors import ContractError
from safestab.oracle import ComparisonInstance, comparison_oracle, random_instance, reaching_oracle


def _ident(v):
    return v


def test_identity_maps_decay_bounded_by_perturbed_solution():
    inst = ComparisonInstance(_ident, _ident, 0.0, 0.5, 1.0, delay=1.0, dt=1e-2, tf=5.0)
    rep = comparison_oracle(inst)
    assert rep.holds and not rep.aborted
    np.testing.assert_allclose(rep.X, np.exp(-rep.times), atol=1e-8)
    assert np.all(rep.Y >= rep.X)


def test_equal_rates_rejected():
    with pytest.raises(ContractError):
        ComparisonInstance(_ident, _ident, 0.3, 0.3, 1.0)


def test_decreasing_map_rejected():
    with pytest.raises(ContractError):
        ComparisonInstance(lambda v: -v, _ident, 0.0, 0.5, 1.0)


def test_zero_history_fixed_point():
    rep = comparison_oracle(ComparisonInstance(_ident, _ident, 0.0, 1.0, 0.0, tf=3.0))
    assert rep.holds and rep.worst_gap == 0.0
    assert np.all(rep.X == 0.0) and np.all(rep.Y == 0.0)


def test_history_forms():
    inst = ComparisonInstance(_ident, _ident, 0.0, 0.5, lambda th: 1.0 + th, delay=0.5, dt=0.1)
    np.testing.assert_allclose(inst.history_samples(), [0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    with pytest.raises(ContractError):
        ComparisonInstance(_ident, _ident, 0.0, 0.5, [1.0, 2.0], delay=0.5, dt=0.1).history_samples()


def test_divergence_is_truncated():
    grow = (np.array([-1.0, 0.0, 1e12]), np.array([0.0, 0.0, 0.0]))
    beta = (np.array([-1.0, 0.0, 1e12]), np.array([-10.0, 0.0, 1e13]))
    rep = comparison_oracle(ComparisonInstance(grow, beta, 0.5, 1.0, 1.0, tf=20.0))
    assert rep.aborted and rep.times[-1] < 20.0


def test_random_instances_hold():
    rng = np.random.default_rng(0)
    for _ in range(50):
        rep = comparison_oracle(random_instance(rng))
        assert rep.holds, rep.worst_gap


def test_reaching_oracle_examples():
    assert reaching_oracle(1.0, 5.0) == pytest.approx(0.2)
    assert reaching_oracle(0.0, 3.0) == 0.0
    assert reaching_oracle(7.4496, 5.0) == pytest.approx(1.48992)
    assert reaching_oracle(-2.0, 4.0) == pytest.approx(0.5)
    with pytest.raises(ContractError):
        reaching_oracle(1.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(U0=st.floats(-100, 100), K=st.floats(0.01, 100), c=st.floats(0.01, 100))
def test_reaching_oracle_homogeneous(U0, K, c):
    assert reaching_oracle(c * U0, c * K) == pytest.approx(reaching_oracle(U0, K), rel=1e-12,
                                                           abs=1e-300)
    assert not math.isnan(reaching_oracle(U0, K))
