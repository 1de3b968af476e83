"""Energy solutions of div(A grad u) + B . grad u = F on a strip.

Multilinear (Q1) elements on the tensor grid, periodic in x'.  The data
are u = f on x0 = 0 and u = 0 (or given values) on x0 = h.  Coefficients
are frozen at cell centres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientField, normalize_first_row
from .ellipticity import check_uniform_ellipticity
from .errors import NoConvergence
from .geometry import GraphDomain, Pullback, StripDomain, pullback_coefficients, pullback_map

DIRECT_LIMIT = 100_000
RESIDUAL_TOL = 1e-10


def _element_tensors(sizes):
    """Q1 element integrals on a box with edge lengths ``sizes``.

    Returns G[i, j, a, b] = int d_i phi_a d_j phi_b, D[i, a, b] = int phi_a d_i phi_b
    and the mass matrix, with corners ordered by np.ndindex((2,)*n).
    """
    n = len(sizes)
    corners = list(np.ndindex(*(2,) * n))
    g = np.array([0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)])
    vol = float(np.prod(sizes))
    pts = list(np.ndindex(*(2,) * n))
    nc = len(corners)
    val = np.zeros((len(pts), nc))
    der = np.zeros((len(pts), n, nc))
    for q, idx in enumerate(pts):
        t = g[list(idx)]
        for a, c in enumerate(corners):
            f1 = [t[d] if c[d] else 1 - t[d] for d in range(n)]
            val[q, a] = np.prod(f1)
            for d in range(n):
                prod = (1.0 if c[d] else -1.0) / sizes[d]
                for e in range(n):
                    if e != d:
                        prod *= f1[e]
                der[q, d, a] = prod
    w = vol / len(pts)
    G = w * np.einsum("qia,qjb->ijab", der, der)
    D = w * np.einsum("qa,qib->iab", val, der)
    Mass = w * np.einsum("qa,qb->ab", val, val)
    return corners, G, D, Mass


def _element_nodes(domain: StripDomain) -> np.ndarray:
    """Global node index of each element corner: shape (elements, 2^n)."""
    N0, M, L = domain.rows, domain.lateral_count, domain.lateral_dims
    shape = domain.node_shape
    base = np.meshgrid(np.arange(N0), *([np.arange(M)] * L), indexing="ij")
    cols = []
    for c in np.ndindex(*(2,) * domain.n):
        idx = [base[0] + c[0]] + [(base[d] + c[d]) % M for d in range(1, domain.n)]
        cols.append(np.ravel_multi_index(tuple(i.ravel() for i in idx), shape))
    return np.stack(cols, axis=1)


@dataclass
class LinearSystem:
    domain: StripDomain
    field: CoefficientField
    matrix: sp.csr_matrix
    rhs: np.ndarray
    full_matrix: sp.csr_matrix
    dirichlet: np.ndarray
    boundary_datum: np.ndarray

    @property
    def interior(self) -> slice:
        per_row = self.domain.lateral_count**self.domain.lateral_dims
        return slice(per_row, self.domain.rows * per_row)


def assemble(field: CoefficientField, domain: StripDomain | None = None, datum=None, source=None,
             top=None) -> LinearSystem:
    """Q1 discretization of a(u, phi) = int <A grad u, grad phi> - int (B . grad u) conj(phi).

    ``datum`` gives u on x0 = 0 (array on the boundary grid or callable of
    lateral points), ``top`` the values on x0 = h (default 0), ``source`` a
    right-hand side F of div(A grad u) + B . grad u = F (callable of points
    or node array).
    """
    domain = domain or field.domain
    if domain is not field.domain:
        field = field.on_domain(domain)
    n = domain.n
    sizes = [domain.mesh_x0] + [domain.lateral_mesh] * domain.lateral_dims
    _, G, D, Mass = _element_tensors(sizes)
    Ac, Bc = field.cell_values
    Ae = Ac.reshape(-1, n, n)
    Be = Bc.reshape(-1, n)
    Ke = np.einsum("eij,ijab->eab", Ae, G) - np.einsum("ei,iab->eab", Be, D)
    conn = _element_nodes(domain)
    nn = int(np.prod(domain.node_shape))
    rows = np.repeat(conn, conn.shape[1], axis=1).ravel()
    cols = np.tile(conn, (1, conn.shape[1])).ravel()
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(nn, nn))
    K.sum_duplicates()

    per_row = domain.lateral_count**domain.lateral_dims
    values = np.zeros(domain.node_shape, dtype=complex)
    f = _boundary_values(domain, datum)
    values[0] = f
    if top is not None:
        values[-1] = _boundary_values(domain, top)
    rhs_full = np.zeros(nn, dtype=complex)
    if source is not None:
        Fn = source(domain.nodes()) if callable(source) else np.asarray(source, dtype=complex)
        Fe = Fn.ravel()[conn]
        np.add.at(rhs_full, conn, -np.einsum("ab,eb->ea", Mass, Fe))
    interior = slice(per_row, domain.rows * per_row)
    K_ii = K[interior, :][:, interior].tocsr()
    rhs = rhs_full[interior] - K[interior, :] @ values.ravel()
    return LinearSystem(domain, field, K_ii, rhs, K, values, f)


def _boundary_values(domain: StripDomain, datum) -> np.ndarray:
    if datum is None:
        return np.zeros(domain.boundary_shape, dtype=complex)
    if callable(datum):
        return np.asarray(datum(domain.boundary_points()[..., 1:]), dtype=complex).reshape(domain.boundary_shape)
    arr = np.asarray(datum, dtype=complex)
    return np.broadcast_to(arr, domain.boundary_shape).copy()


@dataclass
class SolutionField:
    """Nodal solution with datum, residual and derived gradient samples."""

    domain: StripDomain
    u: np.ndarray
    f: np.ndarray
    residual: float
    iterations: int = 0
    method: str = "direct"
    field: CoefficientField | None = None
    metadata: dict = dc_field(default_factory=dict)

    @cached_property
    def half_rows(self):
        """Midpoint samples between node rows.

        Returns (x0, u, grad) at x0 = (j + 1/2) mesh_x0 and every lateral
        node: u is the mean of the two rows, d0 the row difference and the
        lateral derivatives are centred differences averaged over both rows.
        """
        dom = self.domain
        u = self.u
        um = 0.5 * (u[1:] + u[:-1])
        grad = np.empty(um.shape + (dom.n,), dtype=complex)
        grad[..., 0] = (u[1:] - u[:-1]) / dom.mesh_x0
        for d in range(1, dom.n):
            cd = (np.roll(u, -1, axis=d) - np.roll(u, 1, axis=d)) / (2 * dom.lateral_mesh)
            grad[..., d] = 0.5 * (cd[1:] + cd[:-1])
        return dom.half_x0, um, grad

    @property
    def energy(self) -> float:
        _, _, grad = self.half_rows
        return float(np.sum(np.abs(grad) ** 2) * self.domain.cell_volume)

    def l2_norm(self) -> float:
        w = np.ones(self.domain.rows + 1)
        w[[0, -1]] = 0.5
        w = w.reshape((-1,) + (1,) * self.domain.lateral_dims)
        return float(np.sqrt(np.sum(w * np.abs(self.u) ** 2) * self.domain.cell_volume))

    def scaled(self, c: complex) -> "SolutionField":
        return SolutionField(self.domain, c * self.u, c * self.f, self.residual, self.iterations, self.method,
                             self.field, dict(self.metadata))


def _residual(K, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(K @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def solve(system: LinearSystem, method: str = "auto", x0=None, rtol: float = RESIDUAL_TOL,
          maxiter: int = 2000) -> SolutionField:
    """Solve the interior system; direct below 1e5 unknowns, else preconditioned Krylov."""
    K, b = system.matrix, system.rhs
    N = K.shape[0]
    iterations = 0
    if method == "auto":
        method = "direct" if N < DIRECT_LIMIT else "gmres"
    if method == "direct":
        x = spla.splu(K.tocsc()).solve(b)
    elif method in ("gmres", "bicgstab"):
        ilu = spla.spilu(K.tocsc(), drop_tol=1e-5, fill_factor=20)
        P = spla.LinearOperator(K.shape, ilu.solve, dtype=complex)
        counter = {"k": 0}

        def cb(_):
            counter["k"] += 1

        tol = rtol * 0.01
        if method == "gmres":
            x, info = spla.gmres(K, b, x0=x0, rtol=tol, atol=0.0, M=P, restart=100, maxiter=maxiter,
                                 callback=cb, callback_type="pr_norm")
        else:
            x, info = spla.bicgstab(K, b, x0=x0, rtol=tol, atol=0.0, M=P, maxiter=maxiter, callback=cb)
        iterations = counter["k"]
        if info != 0 and _residual(K, x, b) >= rtol:
            raise NoConvergence(iterations, _residual(K, x, b))
    else:
        raise ValueError(f"unknown method {method!r}")
    res = _residual(K, x, b)
    if res >= rtol:
        raise NoConvergence(iterations, res)
    u = system.dirichlet.copy()
    u.ravel()[system.interior] = x
    return SolutionField(system.domain, u, system.boundary_datum, res, iterations, method, system.field)


def solve_field(field: CoefficientField, datum, domain: StripDomain | None = None, **kwargs) -> SolutionField:
    """assemble + solve with a Dirichlet datum."""
    return solve(assemble(field, domain, datum=datum), **kwargs)


# --- Lipschitz graph domains -------------------------------------------------


def pulled_back_field(field: CoefficientField, pullback: Pullback) -> CoefficientField:
    """Coefficients seen by v = u o rho on the flat strip."""

    def sampler(pts):
        phys = pullback.map(pts)
        A, B = field.evaluate(phys)
        return pullback_coefficients(A, B, pullback.jacobian(pts))

    strip = pullback.graph.strip
    return CoefficientField(strip, sampler, None, {"pullback": pullback.descriptor(), "physical": field.spec})


@dataclass
class GraphSolution:
    strip_solution: SolutionField
    physical_nodes: np.ndarray
    pullback: Pullback
    metadata: dict = dc_field(default_factory=dict)

    def physical_energy(self) -> float:
        """int over the physical region of |grad u|^2, computed on the strip."""
        sol = self.strip_solution
        x0, _, grad = sol.half_rows
        pts = sol.domain.row_points(x0)
        J = self.pullback.jacobian(pts)
        inv = np.linalg.inv(J)
        det = np.linalg.det(J)
        gphys = np.einsum("...ji,...j->...i", inv, grad)  # Drho^{-T} grad v
        return float(np.sum(np.abs(gphys) ** 2 * det[..., None]) * sol.domain.cell_volume)


def solve_on_graph(field: CoefficientField, graph: GraphDomain, f, gamma: float | None = None,
                   normalize: bool = True, **kwargs) -> GraphSolution:
    """Pull back to the strip, normalize the first row, solve, and map back.

    ``field`` is evaluated in physical coordinates; ``f`` is the datum as a
    function of the lateral boundary coordinate (array or callable).
    """
    pb = pullback_map(graph, gamma)
    pulled = pulled_back_field(field, pb)
    check_uniform_ellipticity(pulled.all_matrices())
    solved_field = normalize_first_row(pulled)[0] if normalize else pulled
    sol = solve_field(solved_field, f, graph.strip, **kwargs)
    phys = pb.map(graph.strip.nodes())
    meta = {"pullback": pb.descriptor(), "normalized": normalize}
    sol.metadata.update(meta)
    return GraphSolution(sol, phys, pb, meta)
