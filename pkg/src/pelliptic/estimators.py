"""Averages, nontangential maximal functions and square functions of a solution.

Conventions:

* u vanishes for x0 >= h, so ball averages and cones extend above the
  strip with zero data (rows up to 3h are materialized as zeros).
* ball averages w(x) are taken at node rows x0 = j * mesh_x0, j = 1..2*rows;
  beyond 2h every ball lies above the strip and w = 0.
* the nontangential maximal function also takes |f(Q)| at the cone vertex.
* gradients live on half rows (see ``SolutionField.half_rows``); square
  functions integrate them with the midpoint rule.
* lateral windows use the periodic extension, so a cone wider than the
  period counts nodes with multiplicity, exactly like the cone in R^{n-1}
  applied to periodic data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import StripDomain
from .solver import SolutionField
from .windows import ball_reducer, cone_reducer


@dataclass
class InteriorField:
    x0: np.ndarray
    values: np.ndarray


@dataclass
class BoundaryFunction:
    domain: StripDomain
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def coordinates(self) -> np.ndarray:
        return self.domain.boundary_points()[..., 1:]


@lru_cache(maxsize=64)
def _ball_reducer_cached(target, radii, source, mesh, M, L):
    return ball_reducer(np.array(target), np.array(radii), np.array(source), mesh, M, L)


@lru_cache(maxsize=64)
def _cone_reducer_cached(source, a, trunc, mesh, M, L):
    return cone_reducer(np.array(source), a, trunc, mesh, M, L)


def _ball(domain: StripDomain, target_x0, radii, source_x0):
    return _ball_reducer_cached(tuple(np.round(np.asarray(target_x0, float), 14)),
                                tuple(np.round(np.broadcast_to(np.asarray(radii, float), np.shape(target_x0)), 14)),
                                tuple(np.round(np.asarray(source_x0, float), 14)),
                                domain.lateral_mesh, domain.lateral_count, domain.lateral_dims)


def _cone(domain: StripDomain, source_x0, a, truncation):
    return _cone_reducer_cached(tuple(np.round(np.asarray(source_x0, float), 14)), float(a), float(truncation),
                                domain.lateral_mesh, domain.lateral_count, domain.lateral_dims)


def extended_rows(sol: SolutionField, factor: int = 3):
    """Node rows up to factor*h with u padded by zeros above the strip."""
    dom = sol.domain
    N0 = dom.rows
    x0 = np.arange(factor * N0 + 1) * dom.mesh_x0
    data = np.zeros((x0.size,) + dom.boundary_shape, dtype=complex)
    data[: N0 + 1] = sol.u
    return x0, data


def ball_means(domain: StripDomain, source_x0, data, target_x0, radii) -> np.ndarray:
    """Mean of row data over open balls centred at (target_x0, every lateral node)."""
    red = _ball(domain, target_x0, radii, source_x0)
    counts = red.counts()
    sums = red.sum(data)
    shape = (-1,) + (1,) * domain.lateral_dims
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts.reshape(shape)


def averages_w(u: SolutionField, p: float, factor: float = 0.5) -> InteriorField:
    """w(x) = (mean over nodes in B_{factor*delta(x)}(x) of |u|^p)^{1/p}."""
    if not p > 0:
        raise ValueError("p must be positive")
    dom = u.domain
    x0, data = extended_rows(u)
    targets = np.arange(1, 2 * dom.rows + 1) * dom.mesh_x0
    means = ball_means(dom, x0, np.abs(data) ** p, targets, factor * targets)
    return InteriorField(targets, np.maximum(means.real, 0.0) ** (1.0 / p))


def complex_averages(u: SolutionField, target_x0, factor: float = 0.5) -> np.ndarray:
    """Ball averages of u itself (not of |u|) at the given node rows."""
    dom = u.domain
    x0, data = extended_rows(u)
    target_x0 = np.atleast_1d(np.asarray(target_x0, float))
    return ball_means(dom, x0, data, target_x0, factor * target_x0)


def ntmax(u: SolutionField, p: float, a: float, truncation: float = math.inf, w: InteriorField | None = None,
          include_vertex: bool = True) -> BoundaryFunction:
    """sup of w over the cone {a*y0 > |y' - Q'|, y0 <= truncation} at each boundary node.

    With ``include_vertex`` the value |f(Q)| joins the sup: averages over
    shrinking balls approach it along the cone, and the first node row alone
    misses it by O(mesh * |d0 u|).
    """
    dom = u.domain
    w = w or averages_w(u, p)
    red = _cone(dom, w.x0, a, truncation)
    vals = red.max(w.values)[0]
    if include_vertex:
        vals = np.maximum(vals, np.abs(u.u[0]))
    return BoundaryFunction(dom, vals, {"kind": "ntmax", "p": p, "a": a, "truncation": truncation,
                                        "include_vertex": include_vertex})


def ntmax_plain(u: SolutionField, a: float, truncation: float = math.inf) -> BoundaryFunction:
    """sup of |u| over strip nodes in the cone (diagnostic, no averaging)."""
    dom = u.domain
    red = _cone(dom, dom.x0[1:], a, truncation)
    vals = red.max(np.abs(u.u[1:]))[0]
    return BoundaryFunction(dom, vals, {"kind": "ntmax_plain", "a": a, "truncation": truncation})


def square_integrand(u: SolutionField, p: float) -> tuple[np.ndarray, np.ndarray]:
    """|grad u|^2 |u|^{p-2} delta^{2-n} on half rows, zero where grad u = 0."""
    x0, um, grad = u.half_rows
    g2 = np.sum(np.abs(grad) ** 2, axis=-1)
    au = np.abs(um)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(g2 > 0, g2 * au ** (p - 2.0), 0.0)
    n = u.domain.n
    if n != 2:
        weight = weight * x0.reshape((-1,) + (1,) * u.domain.lateral_dims) ** (2 - n)
    return x0, weight


def square_function(u: SolutionField, p: float, a: float, truncation: float = math.inf) -> BoundaryFunction:
    """S_{p,a}(u)(Q) = (cone integral of |grad u|^2 |u|^{p-2} delta^{2-n})^{1/2}."""
    dom = u.domain
    x0, weight = square_integrand(u, p)
    red = _cone(dom, x0, a, truncation)
    total = red.sum(weight)[0] * dom.cell_volume
    return BoundaryFunction(dom, np.sqrt(np.maximum(total, 0.0)),
                            {"kind": "square", "p": p, "a": a, "truncation": truncation})


def normalized_square_function(u: SolutionField, p: float, a: float, truncation: float = math.inf
                               ) -> BoundaryFunction:
    """S_{p,a}(u)^{2/p}: homogeneous of degree one in u, like the maximal functions."""
    S = square_function(u, p, a, truncation)
    return BoundaryFunction(S.domain, S.values ** (2.0 / p), dict(S.meta, kind="square_normalized"))


def lq_norm(bf: BoundaryFunction, q: float) -> float:
    """Discrete L^q norm on the boundary torus."""
    if not q > 0:
        raise ValueError("q must be positive")
    v = np.abs(np.asarray(bf.values))
    if math.isinf(q):
        return float(v.max())
    return float((np.sum(v**q) * bf.domain.lateral_cell) ** (1.0 / q))


def fubini_terms(u: SolutionField, a: float) -> tuple[float, float]:
    """(||S_a u||_2^2, int |grad u|^2 delta dx)."""
    S = square_function(u, 2.0, a)
    lhs = lq_norm(S, 2.0) ** 2
    x0, _, grad = u.half_rows
    g2 = np.sum(np.abs(grad) ** 2, axis=-1)
    shape = (-1,) + (1,) * u.domain.lateral_dims
    rhs = float(np.sum(g2 * x0.reshape(shape)) * u.domain.cell_volume)
    return lhs, rhs


def fubini_identity_check(u: SolutionField, a: float) -> float:
    """||S_a(u)||^2 / int |grad u|^2 delta; continuum value is the cone cross-section constant."""
    lhs, rhs = fubini_terms(u, a)
    if rhs <= 0:
        warnings.warn("zero gradient: Fubini ratio set to 1 by convention", stacklevel=2)
        return 1.0
    return lhs / rhs


def cone_cross_section(a: float, n: int) -> float:
    """Measure of the lateral ball of radius a: the continuum Fubini ratio."""
    k = n - 1
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1) * a**k


def good_lambda_threshold(N_b: BoundaryFunction, p: float, C: float = 4.0) -> float:
    """nu_0 with nu_0^p = C * boundary average of N_b^p."""
    return float((C * np.mean(np.asarray(N_b.values) ** p)) ** (1.0 / p))


def good_lambda_sets(u: SolutionField, p: float, a: float, b: float, nu: float, gamma: float,
                     functions: dict | None = None) -> tuple[float, float]:
    """(|{S_a > nu, N_b <= gamma nu}|, |{S_b > nu/2}|) on the boundary.

    S is the normalized p-adapted square function S_p^{2/p} (equal to S_2
    at p = 2) so both sides scale like u.  ``functions`` may carry
    precomputed 'S_a', 'S_b', 'N_b' boundary functions.
    """
    if not a < b:
        raise ValueError("need a < b")
    fx = functions or good_lambda_functions(u, p, a, b)
    Sa, Sb, Nb = fx["S_a"].values, fx["S_b"].values, fx["N_b"].values
    cell = fx["S_a"].domain.lateral_cell
    lhs = float(np.count_nonzero((Sa > nu) & (Nb <= gamma * nu)) * cell)
    rhs = float(np.count_nonzero(Sb > nu / 2) * cell)
    return lhs, rhs


def good_lambda_functions(u: SolutionField, p: float, a: float, b: float) -> dict:
    return {
        "S_a": normalized_square_function(u, p, a),
        "S_b": normalized_square_function(u, p, b),
        "N_b": ntmax(u, p, b),
    }


def carleson_pairing(u: SolutionField, p: float, density_values: np.ndarray) -> float:
    """int |u|^p d(nu) for a density sampled on node rows 1..rows."""
    return float(np.sum(np.abs(u.u[1:]) ** p * density_values) * u.domain.cell_volume)
