"""Q1 strip solver against closed-form solutions."""

import cmath
import math

import numpy as np
import pytest

from pelliptic.coefficients import make_field, normalize_first_row
from pelliptic.errors import NoConvergence
from pelliptic.geometry import GraphDomain, build_strip
from pelliptic.solver import assemble, solve, solve_field, solve_on_graph

LAPLACE = {"family": "constant", "A": [[1, 0], [0, 1]]}


def fourier_datum(xl):
    return np.exp(2j * np.pi * xl[..., 0])


def sinh_profile(c, h, x0):
    return np.sinh(c * (h - x0)) / np.sinh(c * h)


def l2_error(sol, exact):
    dom = sol.domain
    e = np.abs(sol.u - exact(dom.nodes())) ** 2
    w = np.ones(dom.rows + 1)
    w[[0, -1]] = 0.5
    return math.sqrt(np.sum(w.reshape((-1,) + (1,) * dom.lateral_dims) * e) * dom.cell_volume)


def orders(errors):
    return [math.log2(a / b) for a, b in zip(errors, errors[1:])]


class TestClosedForms:
    @pytest.mark.parametrize("mesh", [1 / 16, 1 / 32, 1 / 64])
    @pytest.mark.parametrize("h", [1.0, 2.0])
    def test_linear_profile_exact(self, mesh, h):
        sol = solve_field(make_field(build_strip(2, h, mesh), LAPLACE), 1.0)
        exact = 1 - sol.domain.nodes()[..., 0] / h
        assert np.max(np.abs(sol.u - exact)) < 1e-12
        assert sol.residual < 1e-10

    @pytest.mark.parametrize("spec,factor", [
        (LAPLACE, 1.0),
        ({"family": "constant", "A": [[[1, 1], [0, 0]], [[0, 0], [1, 1]]]}, 1.0),
        ({"family": "block", "lateral": [[[1, 0.5]]]}, cmath.sqrt(1 + 0.5j)),
    ])
    def test_fourier_sinh_order_two(self, spec, factor):
        c = 2 * math.pi * factor
        errs = []
        for mesh in (1 / 16, 1 / 32, 1 / 64):
            sol = solve_field(make_field(build_strip(2, 1.0, mesh), spec), fourier_datum)
            errs.append(l2_error(sol, lambda p: sinh_profile(c, 1.0, p[..., 0]) * np.exp(2j * np.pi * p[..., 1])))
        for k in orders(errs):
            assert k == pytest.approx(2.0, abs=0.2)

    def test_manufactured_source(self):
        errs = []
        for mesh in (1 / 16, 1 / 32, 1 / 64):
            dom = build_strip(2, 1.0, mesh)

            def exact(p):
                return np.sin(np.pi * p[..., 0]) * np.cos(2 * np.pi * p[..., 1])

            sys_ = assemble(make_field(dom, LAPLACE), datum=0.0, source=lambda p: -5 * np.pi**2 * exact(p))
            errs.append(l2_error(solve(sys_), exact))
        for k in orders(errs):
            assert k == pytest.approx(2.0, abs=0.2)

    def test_three_dimensional_smoke(self):
        dom = build_strip(3, 1.0, 1 / 16)
        f = make_field(dom, {"family": "constant", "A": np.eye(3).tolist()})
        sol = solve_field(f, fourier_datum)
        exact = sinh_profile(2 * math.pi, 1.0, dom.nodes()[..., 0]) * np.exp(2j * np.pi * dom.nodes()[..., 1])
        assert np.max(np.abs(sol.u - exact)) < 2e-2
        assert sol.residual < 1e-10


class TestMethods:
    @pytest.mark.parametrize("method", ["gmres", "bicgstab"])
    def test_krylov_matches_direct(self, method):
        f = make_field(build_strip(2, 1.0, 1 / 32), {"family": "block", "lateral": [[[1, 0.5]]]})
        system = assemble(f, datum=fourier_datum)
        ref = solve(system, "direct")
        got = solve(system, method)
        assert got.residual < 1e-10
        assert np.max(np.abs(got.u - ref.u)) < 1e-8
        assert got.iterations > 0

    def test_unknown_method(self):
        system = assemble(make_field(build_strip(2, 1.0, 1 / 8), LAPLACE), datum=1.0)
        with pytest.raises(ValueError):
            solve(system, "cholesky")

    def test_iteration_cap(self):
        system = assemble(make_field(build_strip(2, 1.0, 1 / 32), LAPLACE), datum=fourier_datum)
        with pytest.raises(NoConvergence):
            solve(system, "bicgstab", rtol=1e-300, maxiter=1)


class TestSolutionField:
    def test_scaling_is_linear(self):
        sol = solve_field(make_field(build_strip(2, 1.0, 1 / 16), LAPLACE), fourier_datum)
        s2 = sol.scaled(3 + 4j)
        np.testing.assert_allclose(s2.u, (3 + 4j) * sol.u)
        assert s2.energy == pytest.approx(25 * sol.energy)

    def test_energy_of_linear_profile(self):
        sol = solve_field(make_field(build_strip(2, 2.0, 1 / 16), LAPLACE), 1.0)
        assert sol.energy == pytest.approx(0.5)
        assert sol.l2_norm() == pytest.approx(math.sqrt(2 / 3), rel=1e-2)

    def test_normalization_preserves_solution(self):
        dom = build_strip(2, 1.0, 1 / 32)
        f = make_field(dom, {"family": "formula", "A": [["2 + 0.2*x0", "0.3*j*sin(2*pi*x1)"], ["0", "1"]]})
        g, _ = normalize_first_row(f)
        a = solve_field(f, fourier_datum)
        b = solve_field(g, fourier_datum)
        assert np.max(np.abs(a.u - b.u)) < 5e-3


class TestGraph:
    def _graph(self, mesh, phi_fn):
        strip = build_strip(2, 1.0, mesh)
        samples = phi_fn(strip.boundary_points()[..., 1:])
        return GraphDomain(samples, strip, 0.0, phi_fn)

    def test_flat_graph_equals_strip(self):
        g = self._graph(1 / 16, lambda xl: np.zeros(xl.shape[:-1]))
        f = make_field(g.strip, LAPLACE)
        gs = solve_on_graph(f, g, fourier_datum)
        ref = solve_field(f, fourier_datum)
        np.testing.assert_allclose(gs.strip_solution.u, ref.u, atol=1e-12)
        assert gs.metadata["pullback"]["min_d0_rho0"] > 0

    def test_bump_graph_converges(self):
        def phi(xl):
            return 0.1 * np.exp(-((xl[..., 0] - 0.5) / 0.15) ** 2)

        sols = []
        for mesh in (1 / 16, 1 / 32, 1 / 64):
            g = self._graph(mesh, phi)
            sols.append(solve_on_graph(make_field(g.strip, LAPLACE), g, fourier_datum))
        coarse = [s.strip_solution.u[:: 2**k, :: 2**k] for k, s in enumerate(sols)]
        d1 = np.max(np.abs(coarse[0] - coarse[2]))
        d2 = np.max(np.abs(coarse[1] - coarse[2]))
        assert d2 < d1 / 2
        assert sols[-1].physical_energy() > 0
        np.testing.assert_allclose(sols[-1].physical_nodes[0, :, 0], phi(sols[-1].physical_nodes[0, :, 1:]), atol=1e-12)
