"""Ball averages, maximal and square functions against direct node loops."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pelliptic.coefficients import make_field
from pelliptic.estimators import (
    averages_w,
    cone_cross_section,
    fubini_identity_check,
    good_lambda_functions,
    good_lambda_sets,
    lq_norm,
    normalized_square_function,
    ntmax,
    ntmax_plain,
    square_function,
)
from pelliptic.geometry import build_strip
from pelliptic.solver import solve_field

BLOCK = {"family": "block", "lateral": [[[1, 0.5]]]}


def fourier(xl):
    return np.exp(2j * np.pi * xl[..., 0]) + 0.3


@pytest.fixture(scope="module")
def small():
    return solve_field(make_field(build_strip(2, 1.0, 1 / 8), BLOCK), fourier)


def padded(sol):
    dom = sol.domain
    rows = 3 * dom.rows + 1
    u = np.zeros((rows, dom.lateral_count), dtype=complex)
    u[: dom.rows + 1] = sol.u
    return u


def brute_w(sol, p):
    dom = sol.domain
    u = padded(sol)
    M, m = dom.lateral_count, dom.mesh_x0
    out = np.zeros((2 * dom.rows, M))
    for j in range(1, 2 * dom.rows + 1):
        t, r = j * m, j * m / 2
        for k in range(M):
            vals = [abs(u[i, (k + d) % M]) ** p for i in range(u.shape[0]) for d in range(-3 * M, 3 * M + 1)
                    if (i * m - t) ** 2 + (d * m) ** 2 < r * r * (1 - 1e-10)]
            out[j - 1, k] = np.mean(vals) ** (1 / p)
    return out


def brute_cone(values_by_row, rows_x0, a, mesh, M, reduce):
    out = np.zeros(M)
    for q in range(M):
        acc = []
        for j, y0 in enumerate(rows_x0):
            for d in range(-4 * M, 4 * M + 1):
                if (d * mesh) ** 2 < (a * y0) ** 2 * (1 - 1e-10):
                    acc.append(values_by_row[j, (q + d) % M])
        out[q] = (max(acc) if acc else 0.0) if reduce == "max" else sum(acc)
    return out


class TestAgainstLoops:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_ball_averages(self, small, p):
        w = averages_w(small, p)
        np.testing.assert_allclose(w.values, brute_w(small, p), rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    def test_ntmax(self, small, a):
        dom = small.domain
        w = averages_w(small, 2.0)
        want = brute_cone(w.values, w.x0, a, dom.lateral_mesh, dom.lateral_count, "max")
        got = ntmax(small, 2.0, a, include_vertex=False).values
        np.testing.assert_allclose(got, want, rtol=1e-12)
        with_vertex = ntmax(small, 2.0, a).values
        np.testing.assert_allclose(with_vertex, np.maximum(want, np.abs(small.u[0])))

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_square_function(self, small, a, p):
        dom = small.domain
        x0, um, grad = small.half_rows
        dens = np.sum(np.abs(grad) ** 2, axis=-1) * np.abs(um) ** (p - 2)
        want = np.sqrt(brute_cone(dens, x0, a, dom.lateral_mesh, dom.lateral_count, "sum") * dom.cell_volume)
        np.testing.assert_allclose(square_function(small, p, a).values, want, rtol=1e-12)

    def test_plain_maximal_function_bounded_by_sup(self, small):
        plain = ntmax_plain(small, 1.0).values
        assert np.all(plain <= np.max(np.abs(small.u)) + 1e-15)


class TestIdentities:
    @pytest.mark.parametrize("mesh", [1 / 32, 1 / 64])
    @pytest.mark.parametrize("a", [0.5, 1.0])
    def test_fubini_ratio(self, mesh, a):
        sol = solve_field(make_field(build_strip(2, 1.0, mesh), BLOCK), fourier)
        # lattice cone widths differ from 2 a y0 by O(mesh)
        assert fubini_identity_check(sol, a) == pytest.approx(cone_cross_section(a, 2), rel=2 * mesh / a)

    def test_cross_section(self):
        assert cone_cross_section(1.0, 2) == pytest.approx(2.0)
        assert cone_cross_section(1.0, 3) == pytest.approx(math.pi)

    def test_lq_norm(self, small):
        bf = ntmax(small, 2.0, 1.0)
        v = bf.values
        assert lq_norm(bf, 2.0) == pytest.approx(math.sqrt(np.sum(v**2) / 8))
        assert lq_norm(bf, math.inf) == v.max()
        with pytest.raises(ValueError):
            lq_norm(bf, 0.0)

    def test_constant_solution_maximal_function(self):
        sol = solve_field(make_field(build_strip(2, 4.0, 1 / 16), BLOCK), 1.0)
        N = ntmax(sol, 2.0, 1.0).values
        np.testing.assert_allclose(N, 1.0)


class TestScaling:
    @settings(max_examples=20, deadline=None)
    @given(re=st.floats(-5, 5), im=st.floats(-5, 5), p=st.sampled_from([1.5, 2.0, 3.0]))
    def test_homogeneity(self, small, re, im, p):
        c = complex(re, im)
        if abs(c) < 1e-3:
            return
        s = small.scaled(c)
        np.testing.assert_allclose(ntmax(s, p, 1.0).values, abs(c) * ntmax(small, p, 1.0).values, rtol=1e-10)
        np.testing.assert_allclose(normalized_square_function(s, p, 1.0).values,
                                   abs(c) * normalized_square_function(small, p, 1.0).values, rtol=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(0.2, 2.0), b=st.floats(0.2, 2.0))
    def test_monotone_in_aperture(self, small, a, b):
        a, b = sorted((a, b))
        assert np.all(square_function(small, 2.0, a).values <= square_function(small, 2.0, b).values + 1e-14)
        assert np.all(ntmax(small, 2.0, a).values <= ntmax(small, 2.0, b).values + 1e-14)


class TestGoodLambdaSets:
    def test_against_counts(self, small):
        fx = good_lambda_functions(small, 2.0, 1.0, 2.0)
        for nu in (0.1, 0.5, 1.0):
            for gamma in (0.5, 0.25):
                lhs, rhs = good_lambda_sets(small, 2.0, 1.0, 2.0, nu, gamma, fx)
                Sa, Sb, Nb = fx["S_a"].values, fx["S_b"].values, fx["N_b"].values
                assert lhs == pytest.approx(sum((s > nu) and (n <= gamma * nu) for s, n in zip(Sa, Nb)) / 8)
                assert rhs == pytest.approx(sum(s > nu / 2 for s in Sb) / 8)

    def test_apertures_ordered(self, small):
        with pytest.raises(ValueError):
            good_lambda_sets(small, 2.0, 2.0, 1.0, 1.0, 0.5)
