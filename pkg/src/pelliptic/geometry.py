"""Strip and Lipschitz-graph domains, cones, dyadic tents and the graph pullback.

The lateral variable x' lives on a torus of period ``lateral_period`` and
the vertical variable x0 = distance to the flat boundary.  Node rows sit at
``x0 = j * mesh_x0`` for ``j = 0..rows``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidGeometry, NotBijective, SingularJacobian
from .windows import STRICT_SLACK, cone_reducer


def _integer_ratio(a: float, b: float, what: str) -> int:
    k = a / b
    r = int(round(k))
    if r < 1 or abs(k - r) > 1e-9 * max(1.0, k):
        raise InvalidGeometry(f"{what}: {b} does not divide {a} evenly")
    return r


@dataclass(frozen=True)
class StripDomain:
    """Discretized strip {0 < x0 < h} over a lateral torus."""

    n: int
    h: float
    mesh_x0: float
    lateral_period: float = 1.0
    lateral_mesh: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidGeometry("dimension must be at least 2")
        if not self.lateral_mesh:
            object.__setattr__(self, "lateral_mesh", self.mesh_x0)
        for name in ("h", "mesh_x0", "lateral_period", "lateral_mesh"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidGeometry(f"{name} must be positive and finite, got {value}")
        if self.mesh_x0 > self.h:
            raise InvalidGeometry(f"mesh {self.mesh_x0} exceeds strip height {self.h}")
        _integer_ratio(self.h, self.mesh_x0, "height")
        _integer_ratio(self.lateral_period, self.lateral_mesh, "lateral period")

    @property
    def rows(self) -> int:
        return int(round(self.h / self.mesh_x0))

    @property
    def lateral_count(self) -> int:
        return int(round(self.lateral_period / self.lateral_mesh))

    @property
    def lateral_dims(self) -> int:
        return self.n - 1

    @property
    def grid_shape(self) -> tuple[int, ...]:
        """Cells in x0 times lateral nodes per direction."""
        return (self.rows,) + (self.lateral_count,) * self.lateral_dims

    @property
    def node_shape(self) -> tuple[int, ...]:
        return (self.rows + 1,) + (self.lateral_count,) * self.lateral_dims

    @property
    def boundary_shape(self) -> tuple[int, ...]:
        return (self.lateral_count,) * self.lateral_dims

    @property
    def x0(self) -> np.ndarray:
        return np.arange(self.rows + 1) * self.mesh_x0

    @property
    def half_x0(self) -> np.ndarray:
        return (np.arange(self.rows) + 0.5) * self.mesh_x0

    @property
    def lateral(self) -> np.ndarray:
        return np.arange(self.lateral_count) * self.lateral_mesh

    @property
    def lateral_cell(self) -> float:
        return self.lateral_mesh**self.lateral_dims

    @property
    def cell_volume(self) -> float:
        return self.mesh_x0 * self.lateral_cell

    def row_points(self, x0) -> np.ndarray:
        """Coordinates of all lateral nodes on the rows ``x0``: shape (len, M.., n)."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        grids = np.meshgrid(*([self.lateral] * self.lateral_dims), indexing="ij")
        lat = np.stack(grids, axis=-1)
        pts = np.empty((x0.size,) + self.boundary_shape + (self.n,))
        pts[..., 0] = x0.reshape((-1,) + (1,) * self.lateral_dims)
        pts[..., 1:] = lat
        return pts

    def nodes(self) -> np.ndarray:
        return self.row_points(self.x0)

    def delta(self, points) -> np.ndarray:
        return np.asarray(points)[..., 0]

    def boundary_points(self) -> np.ndarray:
        return self.row_points([0.0])[0]

    def lateral_distance(self, a, b) -> np.ndarray:
        """Periodic distance between lateral coordinates (last axis = components)."""
        d = np.asarray(a, float) - np.asarray(b, float)
        P = self.lateral_period
        d = d - P * np.round(d / P)
        return np.sqrt(np.sum(d * d, axis=-1))

    def descriptor(self) -> dict:
        return {
            "kind": "strip",
            "n": self.n,
            "h": self.h,
            "mesh_x0": self.mesh_x0,
            "lateral_period": self.lateral_period,
            "lateral_mesh": self.lateral_mesh,
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.descriptor(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_descriptor(cls, d: dict) -> "StripDomain":
        return cls(int(d["n"]), float(d["h"]), float(d["mesh_x0"]),
                   float(d.get("lateral_period", 1.0)), float(d.get("lateral_mesh", 0.0)))

    def with_height(self, h: float) -> "StripDomain":
        return StripDomain(self.n, h, self.mesh_x0, self.lateral_period, self.lateral_mesh)


def build_strip(n: int, h: float, meshes, period: float = 1.0) -> StripDomain:
    """Strip of height ``h``; ``meshes`` is one spacing or (mesh_x0, lateral_mesh)."""
    if np.ndim(meshes) == 0:
        m0 = ml = float(meshes)
    else:
        m0, ml = (float(v) for v in meshes)
    return StripDomain(int(n), float(h), m0, float(period), ml)


@dataclass(frozen=True)
class ConeGeometry:
    aperture: float
    truncation: float = math.inf
    vertex: tuple = ()

    def __post_init__(self):
        if not self.aperture > 0:
            raise InvalidGeometry("aperture must be positive")
        if not self.truncation > 0:
            raise InvalidGeometry("truncation must be positive")

    def contains(self, domain: StripDomain, points) -> np.ndarray:
        """Strict predicate a*y0 > |y' - Q'| (periodic) and 0 < y0 <= truncation."""
        pts = np.asarray(points, float)
        y0 = pts[..., 0]
        q = np.asarray(self.vertex, float) if len(self.vertex) else np.zeros(domain.lateral_dims)
        dist = domain.lateral_distance(pts[..., 1:], q)
        inside = (self.aperture * y0) ** 2 * (1 - STRICT_SLACK) > dist**2
        return inside & (y0 > 0) & (y0 <= self.truncation * (1 + 1e-12))


def cone_mask(domain: StripDomain, Q, a: float, h_trunc: float | None = None) -> np.ndarray:
    """Indices (j, k1, ...) of strip nodes inside the cone with vertex Q.

    ``Q`` is a tuple of lateral indices of a boundary node.  Nodes are
    distinct (no periodic multiplicity) and include rows 1..rows.
    """
    Q = tuple(int(q) for q in np.atleast_1d(Q))
    vertex = tuple(q * domain.lateral_mesh for q in Q)
    cone = ConeGeometry(a, math.inf if h_trunc is None else h_trunc, vertex)
    inside = cone.contains(domain, domain.nodes())
    inside[0] = False
    return np.argwhere(inside)


def cone_window(domain: StripDomain, source_x0, a: float, truncation: float = math.inf):
    """Window reducer evaluating cone sums/maxima at every boundary node."""
    return cone_reducer(source_x0, a, truncation, domain.lateral_mesh,
                        domain.lateral_count, domain.lateral_dims)


@dataclass
class DyadicTentSystem:
    """Surface balls of radius period/2^(l+1) and their tents Omega ∩ B_r(Q)."""

    domain: StripDomain
    radii: np.ndarray
    centers: list

    def surface_measure(self, r: float) -> float:
        """Flat-boundary measure of a lateral ball of radius r."""
        k = self.domain.lateral_dims
        return math.pi ** (k / 2) / math.gamma(k / 2 + 1) * r**k

    def tent_counts(self, level: int) -> np.ndarray:
        """Number of distinct interior nodes (rows >= 1) in each tent of a level."""
        r = self.radii[level]
        nodes = self.domain.nodes()[1:]
        out = []
        for c in self.centers[level]:
            d2 = self.domain.lateral_distance(nodes[..., 1:], c) ** 2 + nodes[..., 0] ** 2
            out.append(int(np.count_nonzero(d2 < r * r * (1 - STRICT_SLACK))))
        return np.array(out)


def dyadic_tents(domain: StripDomain, max_levels: int) -> DyadicTentSystem:
    if max_levels < 1:
        raise ValueError("need at least one level")
    P = domain.lateral_period
    radii, centers = [], []
    for level in range(max_levels):
        r = P / 2 ** (level + 1)
        if r < domain.lateral_mesh:
            break
        count = 2**level
        grid = np.arange(count) * (2 * r)
        mesh = np.meshgrid(*([grid] * domain.lateral_dims), indexing="ij")
        centers.append(np.stack(mesh, axis=-1).reshape(-1, domain.lateral_dims))
        radii.append(r)
    return DyadicTentSystem(domain, np.array(radii), centers)


# --- Lipschitz graph domains and the pullback ------------------------------


def lateral_derivative(values: np.ndarray, mesh: float, axis: int) -> np.ndarray:
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2 * mesh)


@dataclass
class GraphDomain:
    """Region above x0 = phi(x') over the lateral torus of ``strip``."""

    phi: np.ndarray
    strip: StripDomain
    lipschitz_L: float = 0.0
    phi_func: Callable | None = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != self.strip.boundary_shape:
            raise InvalidGeometry(f"phi samples have shape {self.phi.shape}, expected {self.strip.boundary_shape}")
        q = self.discrete_lipschitz()
        if not self.lipschitz_L:
            self.lipschitz_L = q
        elif q > self.lipschitz_L * (1 + 1e-9):
            raise InvalidGeometry(f"discrete Lipschitz quotient {q} exceeds L={self.lipschitz_L}")

    def discrete_lipschitz(self) -> float:
        q = 0.0
        for ax in range(self.phi.ndim):
            diff = np.abs(np.roll(self.phi, -1, axis=ax) - self.phi) / self.strip.lateral_mesh
            q = max(q, float(diff.max()))
        return q

    def evaluate_phi(self, xl: np.ndarray) -> np.ndarray:
        """phi at lateral points (..., n-1); periodic multilinear interpolation of samples."""
        if self.phi_func is not None:
            return np.asarray(self.phi_func(xl), dtype=float)
        return periodic_interpolate(self.phi, self.strip.lateral_mesh, xl)

    def descriptor(self) -> dict:
        d = self.strip.descriptor()
        d.update(kind="graph", lipschitz_L=self.lipschitz_L, phi=self.phi.tolist())
        return d


def periodic_interpolate(samples: np.ndarray, mesh: float, xl: np.ndarray) -> np.ndarray:
    xl = np.asarray(xl, float)
    M = samples.shape[0]
    dims = samples.ndim
    s = xl / mesh
    base = np.floor(s).astype(np.int64)
    frac = s - base
    out = np.zeros(xl.shape[:-1])
    for corner in np.ndindex(*(2,) * dims):
        w = np.ones(xl.shape[:-1])
        idx = []
        for d, c in enumerate(corner):
            w = w * (frac[..., d] if c else 1 - frac[..., d])
            idx.append((base[..., d] + c) % M)
        out += w * samples[tuple(idx)]
    return out


class Mollifier:
    """Even bump c (1 - |z|^2)_+^3 on R^k with unit mass."""

    def __init__(self, dims: int, order: int = 8):
        self.dims = dims
        # tensor Gauss-Legendre on [-1,1]^k restricted to the support
        g, w = np.polynomial.legendre.leggauss(order * 2)
        mesh = np.meshgrid(*([g] * dims), indexing="ij")
        wm = np.meshgrid(*([w] * dims), indexing="ij")
        z = np.stack(mesh, axis=-1).reshape(-1, dims)
        wz = np.prod(np.stack(wm, axis=-1).reshape(-1, dims), axis=1)
        self.norm = 1.0
        vals = self.value(z)
        # normalize against the quadrature itself so constants are reproduced exactly
        self.norm = 1.0 / float(np.sum(vals * wz))
        vals = vals * self.norm
        keep = vals > 0
        self.nodes, self.weights = z[keep], wz[keep]

    def value(self, z: np.ndarray) -> np.ndarray:
        s = 1.0 - np.sum(np.asarray(z) ** 2, axis=-1)
        return self.norm * np.where(s > 0, s, 0.0) ** 3

    def gradient(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        s = 1.0 - np.sum(z**2, axis=-1)
        return (-6.0 * self.norm * np.where(s > 0, s, 0.0) ** 2)[..., None] * z

    def descriptor(self) -> dict:
        return {"kind": "polynomial_bump", "power": 3, "dims": self.dims, "quadrature_points": int(self.weights.size)}


@dataclass
class Pullback:
    """rho(x0, x') = (x0 + (P_{gamma x0} * phi)(x'), x') and its Jacobian."""

    graph: GraphDomain
    gamma: float
    mollifier: Mollifier
    min_d0: float = field(default=float("nan"))

    def _convolutions(self, points: np.ndarray):
        pts = np.asarray(points, float)
        x0 = pts[..., 0]
        xl = pts[..., 1:]
        k = xl.shape[-1]
        lam = self.gamma * x0
        z, wz = self.mollifier.nodes, self.mollifier.weights
        P = self.mollifier.value(z)
        gP = self.mollifier.gradient(z)
        # phi(x' - lam z) for every quadrature node; shape (..., Q)
        shifted = xl[..., None, :] - lam[..., None, None] * z
        phis = self.graph.evaluate_phi(shifted)
        conv = np.sum(phis * (wz * P), axis=-1)
        radial = (k * P + np.sum(gP * z, axis=-1)) * wz
        d0_int = np.sum(phis * radial, axis=-1)
        dl_int = np.einsum("...q,qd->...d", phis, gP * wz[:, None])
        return x0, xl, lam, conv, d0_int, dl_int

    def map(self, points) -> np.ndarray:
        x0, xl, lam, conv, _, _ = self._convolutions(points)
        out = np.array(points, dtype=float, copy=True)
        out[..., 0] = x0 + conv
        return out

    def jacobian(self, points) -> np.ndarray:
        """D rho with rows = components of rho, columns = derivatives."""
        x0, xl, lam, conv, d0_int, dl_int = self._convolutions(points)
        n = xl.shape[-1] + 1
        J = np.zeros(np.shape(x0) + (n, n))
        for d in range(1, n):
            J[..., d, d] = 1.0
        safe = np.where(lam > 0, lam, 1.0)
        d0 = 1.0 - (self.gamma / safe) * d0_int
        dl = dl_int / safe[..., None]
        at_bdry = lam <= 0
        if np.any(at_bdry):
            # boundary row: rho0 = phi, d0 rho0 = 1, lateral gradient of phi
            d0 = np.where(at_bdry, 1.0, d0)
            grad_phi = self._boundary_gradient(np.asarray(points)[at_bdry][..., 1:])
            dl[at_bdry] = grad_phi
        J[..., 0, 0] = d0
        J[..., 0, 1:] = dl
        return J

    def _boundary_gradient(self, xl):
        eps = 1e-6 * self.graph.strip.lateral_mesh
        out = np.zeros(xl.shape)
        for d in range(xl.shape[-1]):
            e = np.zeros(xl.shape[-1])
            e[d] = eps
            out[..., d] = (self.graph.evaluate_phi(xl + e) - self.graph.evaluate_phi(xl - e)) / (2 * eps)
        return out

    def inverse(self, physical_points) -> np.ndarray:
        """Numerically invert rho by one-dimensional root finding in x0."""
        pts = np.asarray(physical_points, float)
        flat = pts.reshape(-1, pts.shape[-1])
        out = flat.copy()
        L = max(self.graph.lipschitz_L, 1.0)
        for i, y in enumerate(flat):
            def g(t, y=y):
                p = y.copy()
                p[0] = t
                return self.map(p[None])[0, 0] - y[0]
            target_lo = y[0] - float(np.max(np.abs(self.graph.phi))) - 1.0
            lo = max(0.0, target_lo)
            hi = lo + 2.0 + 2 * L + abs(y[0])
            while g(hi) < 0:
                hi *= 2
            if g(lo) > 0:
                out[i, 0] = lo
                continue
            out[i, 0] = brentq(g, lo, hi, xtol=1e-14)
        return out.reshape(pts.shape)

    def descriptor(self) -> dict:
        return {"gamma": self.gamma, "mollifier": self.mollifier.descriptor(),
                "lipschitz_L": self.graph.lipschitz_L, "min_d0_rho0": self.min_d0}


def default_gamma(L: float) -> float:
    return 1.0 / (2.0 * max(L, 1.0))


def pullback_map(domain: GraphDomain, gamma: float | None = None, mollifier: Mollifier | None = None) -> Pullback:
    """Build rho on the strip grid; fails with NotBijective if d0 rho0 <= 0."""
    if gamma is None:
        gamma = default_gamma(domain.lipschitz_L)
    if mollifier is None:
        mollifier = Mollifier(domain.strip.lateral_dims)
    pb = Pullback(domain, float(gamma), mollifier)
    J = pb.jacobian(domain.strip.nodes())
    pb.min_d0 = float(J[..., 0, 0].min())
    if pb.min_d0 <= 0:
        raise NotBijective(pb.min_d0)
    return pb


def pullback_coefficients(A, B, Drho, tol: float = 1e-12):
    """Coefficients of the equation solved by v = u o rho.

    A_tilde = J Drho^{-1} A(rho) Drho^{-T},  B_tilde = J Drho^{-1} B(rho),
    with J = det Drho.  ``A`` and ``B`` are already evaluated at rho(x).
    """
    Drho = np.asarray(Drho, float)
    J = np.linalg.det(Drho)
    if np.any(np.abs(J) <= tol):
        raise SingularJacobian(f"Jacobian determinant min {np.abs(J).min():.3g}")
    inv = np.linalg.inv(Drho)
    At = J[..., None, None] * inv @ np.asarray(A, complex) @ np.swapaxes(inv, -1, -2)
    Bt = J[..., None] * np.einsum("...ij,...j->...i", inv, np.asarray(B, complex))
    return At, Bt
