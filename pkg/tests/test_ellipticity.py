"""Algebraic ellipticity quantities against brute-force and closed-form oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from pelliptic.ellipticity import (
    check_acond,
    check_dissipativity_form,
    check_uniform_ellipticity,
    conjugate_exponent,
    delta_p,
    ellipticity_report,
    mu_A,
    mu_tilde,
    p_range,
    p_range_bisection,
    p_range_symmetric,
    pointwise_dissipativity_constant,
    pointwise_dissipativity_matrix,
    positivity,
)
from pelliptic.errors import NotElliptic, NotSymmetricImaginaryPart


def random_elliptic(rng, n, spread=1.0):
    """Hermitian part shifted to be positive definite, plus a random skew part."""
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = 0.5 * (M + M.conj().T)
    shift = -np.linalg.eigvalsh(H)[0] + rng.uniform(0.1, 1.0)
    return M + shift * np.eye(n) * spread


def sphere_points(rng, n, count):
    z = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def j_p(xi, p):
    return xi.real / p + 1j * xi.imag / conjugate_exponent(p)


def brute_delta(A, p, rng, starts=12):
    """Min of Re<A xi, J_p xi> by sampling plus local polishing on the sphere."""
    n = A.shape[0]

    def f(v):
        xi = v[:n] + 1j * v[n:]
        xi = xi / np.linalg.norm(xi)
        return float(np.real(np.vdot(j_p(xi, p), A @ xi)))

    samples = sphere_points(rng, n, 4000)
    vals = np.real(np.einsum("ki,ij,kj->k", np.conj(j_p(samples, p)), A, samples))
    best = vals.min()
    for k in np.argsort(vals)[:starts]:
        x = samples[k]
        res = minimize(f, np.concatenate([x.real, x.imag]), method="BFGS", options={"gtol": 1e-12})
        best = min(best, res.fun)
    return best


def brute_mu(A, rng, count=20000):
    n = A.shape[0]
    xi = sphere_points(rng, n, count)
    num = np.real(np.einsum("ki,ij,kj->k", np.conj(xi), A, xi))
    den = np.abs(np.einsum("ki,ij,kj->k", xi, A, xi))
    mask = den > 1e-12
    best = np.min(num[mask] / den[mask])

    def f(v):
        z = v[:n] + 1j * v[n:]
        d = abs(z @ A @ z)
        return np.real(np.conj(z) @ A @ z) / d if d > 1e-12 else 1e9

    for k in np.argsort(num[mask] / den[mask])[:10]:
        x = xi[mask][k]
        res = minimize(f, np.concatenate([x.real, x.imag]), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        best = min(best, res.fun)
    return best


class TestClosedForms:
    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
    def test_scalar_multiple_of_identity(self, gamma):
        A = (1 + 1j * gamma) * np.eye(2)
        mu = 1 / math.hypot(1, gamma)
        assert mu_A(A) == pytest.approx(mu, abs=1e-10)
        assert p_range(A)[0] == pytest.approx(2 / (1 + mu), abs=1e-10)
        assert mu_tilde(A) == pytest.approx(1 / gamma, rel=1e-12)
        t = math.hypot(1 / gamma, 1) - 1 / gamma
        assert p_range_symmetric(A)[0] == pytest.approx(1 + t * t, rel=1e-12)

    def test_golden_value_at_gamma_one(self):
        A = (1 + 1j) * np.eye(2)
        expected = 4 - 2 * math.sqrt(2)
        assert p_range(A)[0] == pytest.approx(expected, abs=1e-9)
        assert p_range_symmetric(A)[0] == pytest.approx(expected, abs=1e-12)
        assert p_range_bisection(A)[0] == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("n", [2, 3])
    def test_real_matrices_have_full_range(self, n):
        rng = np.random.default_rng(n)
        M = rng.normal(size=(n, n))
        A = M @ M.T + np.eye(n) + 0.3 * (M - M.T)
        assert p_range(A) == (1.0, math.inf)

    @pytest.mark.parametrize("seed", range(5))
    def test_delta_two_is_half_lambda(self, seed):
        A = random_elliptic(np.random.default_rng(seed), 3)
        lam, _ = check_uniform_ellipticity(A)
        assert delta_p(A, 2.0) == pytest.approx(lam / 2, rel=1e-12)

    def test_identity_report(self):
        rep = ellipticity_report(np.eye(2))
        assert rep.p0 == 1.0 and math.isinf(rep.p0_prime)
        assert rep.lam == pytest.approx(1.0)

    def test_dissipativity_margin_of_identity(self):
        ok, margin = check_dissipativity_form(np.eye(2), 2.0)
        assert ok and margin == pytest.approx(1.0)


class TestAgainstBruteForce:
    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("p", [1.3, 2.0, 3.5])
    def test_delta_p(self, seed, p):
        rng = np.random.default_rng(100 + seed)
        A = random_elliptic(rng, 2 + seed % 2)
        assert delta_p(A, p) == pytest.approx(brute_delta(A, p, rng), abs=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_mu(self, seed):
        rng = np.random.default_rng(200 + seed)
        A = random_elliptic(rng, 2)
        assert mu_A(A) == pytest.approx(brute_mu(A, rng), abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_p_range_endpoint_is_sign_change(self, seed):
        A = random_elliptic(np.random.default_rng(300 + seed), 2)
        p0, p1 = p_range(A)
        if p0 > 1 + 1e-6:
            assert delta_p(A, p0 * (1 + 1e-5)) > 0
            assert delta_p(A, p0 * (1 - 1e-5)) < 0
        assert p1 == pytest.approx(conjugate_exponent(p0) if p0 > 1 else math.inf)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 6.0])
    def test_pointwise_integrand(self, p):
        """Quadratic form against Re<A grad u, grad(|u|^{p-2} u)> / |u|^{p-2} at u = 1."""
        rng = np.random.default_rng(7)
        A = random_elliptic(rng, 3)
        Q = pointwise_dissipativity_matrix(A, p)
        for _ in range(50):
            X, Y = rng.normal(size=3), rng.normal(size=3)
            g = X + 1j * Y
            gv = (p - 1) * X + 1j * Y
            direct = np.real(np.vdot(gv, A @ g))
            v = np.concatenate([X, Y])
            assert v @ Q @ v == pytest.approx(direct, rel=1e-12, abs=1e-12)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10_000), p=st.floats(1.05, 12.0))
    def test_delta_p_symmetric_under_conjugation(self, seed, p):
        A = random_elliptic(np.random.default_rng(seed), 2)
        a, b = delta_p(A, p), delta_p(A, conjugate_exponent(p))
        if min(abs(a), abs(b)) > 1e-9:
            assert (a > 0) == (b > 0)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10_000), p=st.floats(1.05, 12.0))
    def test_delta_p_sign_matches_dissipativity(self, seed, p):
        A = random_elliptic(np.random.default_rng(seed), 2 + seed % 2)
        d = delta_p(A, p)
        _, margin = check_dissipativity_form(A, p)
        if abs(d) > 1e-6 and abs(margin) > 1e-6:
            assert (d > 0) == (margin > 0)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), c=st.floats(0.1, 10.0))
    def test_positive_homogeneity(self, seed, c):
        A = random_elliptic(np.random.default_rng(seed), 2)
        assert delta_p(c * A, 3.0) == pytest.approx(c * delta_p(A, 3.0), rel=1e-9, abs=1e-12)
        assert mu_A(c * A) == pytest.approx(mu_A(A), rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_pointwise_constant_positive_inside_range(self, seed):
        A = random_elliptic(np.random.default_rng(seed), 2)
        p0, p1 = p_range(A)
        p = 2.0 if math.isinf(p1) else 0.5 * (p0 + min(p1, 10.0))
        assert pointwise_dissipativity_constant(A, p) > 0 or delta_p(A, p) <= 1e-9

    @settings(max_examples=40, deadline=None)
    @given(gamma=st.floats(0.01, 20.0), p=st.floats(1.05, 20.0))
    def test_acond_matches_symmetric_range(self, gamma, p):
        A = (1 + 1j * gamma) * np.eye(2)
        lo, hi = p_range_symmetric(A)
        inside = lo < p < hi
        if min(abs(p - lo), abs(p - hi)) > 1e-6:
            assert check_acond(A, p) == inside


class TestErrors:
    def test_not_elliptic(self):
        with pytest.raises(NotElliptic):
            check_uniform_ellipticity(np.diag([1.0, -1.0]))

    def test_skew_imaginary_part_rejected(self):
        A = np.eye(2) + 1j * np.array([[0, 1], [-1, 0]])
        with pytest.raises(NotSymmetricImaginaryPart):
            p_range_symmetric(A)

    @pytest.mark.parametrize("p", [1.0, 0.5, -2.0])
    def test_exponent_domain(self, p):
        with pytest.raises(ValueError):
            delta_p(np.eye(2), p)

    @pytest.mark.parametrize("value,label", [(1.0, "positive"), (-1.0, "negative"), (1e-12, "indeterminate")])
    def test_positivity_band(self, value, label):
        assert positivity(value) == label

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            delta_p(np.ones((2, 3)), 2.0)
