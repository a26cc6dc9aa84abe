import numpy as np
import pytest
from scipy import integrate

from l1indep.kernel import Kernel, autocorrelation_1d, cdf_1d

KINDS = ["uniform", "epanechnikov", "triangular"]


def test_uniform_eval_examples():
    assert Kernel("uniform", 1).eval(0.0) == 1.0
    assert Kernel("uniform", 1).eval(0.6) == 0.0
    assert Kernel("uniform", 2).eval([0.4, -0.4]) == 1.0
    assert Kernel("uniform", 1).eval(0.5) == 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_density_properties(kind):
    k = Kernel(kind, 1)
    mass, _ = integrate.quad(lambda u: k.eval(u), -0.5, 0.5, points=[0.0])
    assert abs(mass - 1.0) < 1e-6
    u = np.linspace(-2, 2, 4001)
    vals = k.eval(u)
    assert np.all(vals >= 0) and np.all(vals[np.abs(u) > 0.5] == 0)
    assert np.max(vals) < np.inf


@pytest.mark.parametrize("kind", KINDS)
def test_l2_norm_matches_quadrature(kind):
    k = Kernel(kind, 1)
    ref, _ = integrate.quad(lambda u: k.eval(u) ** 2, -0.5, 0.5, points=[0.0], epsabs=1e-13)
    assert abs(k.l2_norm_sq() - ref) < 1e-6
    assert abs(Kernel(kind, 2).l2_norm_sq() - ref**2) < 1e-6


def test_uniform_l2_norms():
    assert Kernel("uniform", 1).l2_norm_sq() == 1.0
    assert Kernel("uniform", 2).l2_norm_sq() == 1.0


def test_uniform_autocorrelation_examples():
    k = Kernel("uniform", 1)
    assert k.autocorrelation(0.0) == pytest.approx(1.0, abs=1e-12)
    assert k.autocorrelation(1.2) == 0.0
    assert k.autocorrelation(0.5) == pytest.approx(0.5, abs=1e-12)


def test_uniform_autocorrelation_triangle():
    t = np.linspace(-1.5, 1.5, 1001)
    np.testing.assert_allclose(autocorrelation_1d("uniform", t), np.maximum(1 - np.abs(t), 0), atol=1e-9, rtol=0)


@pytest.mark.parametrize("kind", KINDS)
def test_autocorrelation_matches_numerical_convolution(kind):
    k = Kernel(kind, 1)
    norm = k.l2_norm_sq()
    for t in [0.0, 0.13, 0.5, 0.77, -0.31, 0.999]:
        lo, hi = max(-0.5, -0.5 - t), min(0.5, 0.5 - t)
        ref = integrate.quad(lambda u: k.eval(u) * k.eval(u + t), lo, hi, points=[0.0, -t], epsabs=1e-13)[0] / norm if hi > lo else 0.0
        assert k.autocorrelation(t) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("kind", KINDS)
def test_autocorrelation_symmetry_and_bounds(kind):
    t = np.linspace(-1.5, 1.5, 601)
    r = autocorrelation_1d(kind, t)
    np.testing.assert_allclose(r, autocorrelation_1d(kind, -t), atol=1e-14)
    assert np.all(np.abs(r) <= 1 + 1e-12)
    assert np.all(r[np.abs(t) >= 1] == 0)
    assert np.all(r[np.abs(t) > 1e-9] < 1)


@pytest.mark.parametrize("kind", KINDS)
def test_multivariate_autocorrelation_factorizes(kind):
    k = Kernel(kind, 3)
    rng = np.random.default_rng(3)
    t = rng.uniform(-1.2, 1.2, size=(50, 3))
    np.testing.assert_allclose(k.autocorrelation(t), np.prod(autocorrelation_1d(kind, t), axis=1), atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
def test_cdf_matches_integral(kind):
    k = Kernel(kind, 1)
    for u in [-0.7, -0.5, -0.2, 0.0, 0.31, 0.5, 0.9]:
        ref = integrate.quad(lambda s: k.eval(s), -0.5, min(max(u, -0.5), 0.5), points=[0.0])[0] if u > -0.5 else 0.0
        assert float(cdf_1d(kind, u)) == pytest.approx(ref, abs=1e-10)


def test_invalid_kernel():
    with pytest.raises(ValueError):
        Kernel("gaussian")
    with pytest.raises(ValueError):
        Kernel("uniform", 0)
