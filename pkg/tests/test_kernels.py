import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import isotonic_regression

from nfsparse import kernels
from nfsparse.optimizer import build_diff_grid

BACKENDS = kernels.available_backends()


def _naive_h(x, b, theta, w, lam):
    S, T = w.shape
    total = 0.0
    for s in range(S):
        for t in range(T):
            z = np.exp(2j * np.pi * (b[s] * x**2 + theta[t] * x) / lam).sum()
            total += w[s, t] * abs(z) ** 2
    return total / (S * T)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_objective_matches_naive_loop(name):
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(-0.2, 0.2, 7))
    g = build_diff_grid(6, 5, 0.05)
    h, _, _ = BACKENDS[name].interference_terms(x, g.b_samples, g.theta_samples, g.weights, 0.01, 0)
    assert h == pytest.approx(_naive_h(x, g.b_samples, g.theta_samples, g.weights, 0.01), rel=1e-12)


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_backends_agree(n, S, T, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-0.3, 0.3, n))
    b = rng.uniform(-0.05, 0.05, S)
    th = rng.uniform(-2, 2, T)
    w = rng.uniform(0, 1, (S, T))
    w[rng.uniform(size=(S, T)) < 0.2] = 0.0
    hp, gp, Hp = BACKENDS["python"].interference_terms(x, b, th, w, 0.01, 2)
    hc, gc, Hc = BACKENDS["cython"].interference_terms(x, b, th, w, 0.01, 2)
    assert hc == pytest.approx(hp, rel=1e-10, abs=1e-10)
    scale_g = max(np.max(np.abs(gp)), 1.0)
    scale_H = max(np.max(np.abs(Hp)), 1.0)
    np.testing.assert_allclose(gc, gp, atol=1e-9 * scale_g)
    np.testing.assert_allclose(Hc, Hp, atol=1e-9 * scale_H)
    np.testing.assert_array_equal(Hc, Hc.T)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_order_controls_outputs(name):
    g = build_diff_grid(4, 4, 0.05)
    x = np.array([-0.01, 0.0, 0.02])
    out0 = BACKENDS[name].interference_terms(x, g.b_samples, g.theta_samples, g.weights, 0.01, 0)
    out1 = BACKENDS[name].interference_terms(x, g.b_samples, g.theta_samples, g.weights, 0.01, 1)
    assert out0[1] is None and out0[2] is None
    assert out1[1].shape == (3,) and out1[2] is None


@pytest.mark.parametrize("name", sorted(BACKENDS))
@settings(max_examples=60, deadline=None)
@given(y=arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3)))
def test_pav_matches_scipy(name, y):
    got = BACKENDS[name].pav_nondecreasing(np.ascontiguousarray(y))
    want = isotonic_regression(y).x
    np.testing.assert_allclose(got, want, atol=1e-9 * max(1.0, np.max(np.abs(y))))
    assert np.all(np.diff(got) >= -1e-12)


def test_pav_examples():
    f = kernels.pav_nondecreasing
    np.testing.assert_allclose(f(np.array([3.0, 1.0, 2.0])), [2.0, 2.0, 2.0])
    np.testing.assert_allclose(f(np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(f(np.array([1.0, 3.0, 2.0, 4.0])), [1.0, 2.5, 2.5, 4.0])


def test_active_backend_is_reported():
    assert kernels.BACKEND in BACKENDS
