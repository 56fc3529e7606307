import subprocess
import sys

import numpy as np
import pytest

from safestab import _kernels as K
from safestab.oracle import random_instance

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def _hermite_data(seed=0, samples=41, dim=3):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(-1.0, 0.0, samples))
    t[0], t[-1] = -1.0, 0.0
    x = rng.normal(size=(samples, dim))
    dl = rng.normal(size=(samples - 1, dim))
    dr = rng.normal(size=(samples - 1, dim))
    # include knots, interior points and both ends
    q = np.concatenate((t, np.linspace(-1.0, 0.0, 97)))
    return t, x, dl, dr, q


def test_hermite_backends_agree():
    t, x, dl, dr, q = _hermite_data()
    np.testing.assert_allclose(K.hermite_many_nb(t, x, dl, dr, q),
                               K.hermite_many_np(t, x, dl, dr, q), rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(K.hermite_deriv_many_nb(t, x, dl, dr, q),
                               K.hermite_deriv_many_np(t, x, dl, dr, q), rtol=1e-12, atol=1e-12)
    for s in q[::7]:
        np.testing.assert_allclose(K.hermite_one_nb(t, x, dl, dr, s),
                                   K.hermite_one_np(t, x, dl, dr, s), rtol=1e-13, atol=1e-13)


def test_hermite_single_knot():
    t, x = np.array([0.0]), np.array([[1.0, 2.0]])
    d = np.zeros((0, 2))
    q = np.array([0.0, 0.0])
    np.testing.assert_array_equal(K.hermite_many_nb(t, x, d, d, q), K.hermite_many_np(t, x, d, d, q))
    np.testing.assert_array_equal(K.hermite_one_nb(t, x, d, d, 0.0), [1.0, 2.0])


def test_comparison_backends_agree():
    rng = np.random.default_rng(3)
    for _ in range(5):
        inst = random_instance(rng, tf=3.0)
        (ax, ay), (bx, by) = inst.tables()
        args = (ax, ay, bx, by, inst.eps1, inst.eps2, inst.history_samples(), inst.window,
                inst.dt, int(round(inst.tf / inst.dt)))
        for a, b in zip(K.comparison_pair_nb(*args), K.comparison_pair_np(*args)):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_disable_switch_selects_numpy():
    code = "from safestab import _kernels as K; print(K.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"SAFESTAB_DISABLE_NUMBA": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "numpy"
