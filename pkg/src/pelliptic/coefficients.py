"""Coefficient fields A(x), B(x) on a strip, Carleson densities and row normalization.

A field is defined by a sampler ``points -> (A, B)`` that can be evaluated
anywhere in the strip: at nodes, at cell centres for assembly and at
half rows for the estimators.  Derivatives of A come from an analytic
gradient when the family provides one and from centred differences
otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .ellipticity import check_uniform_ellipticity, delta_p, ellipticity_constants
from .errors import A00NearZero, ConfigError
from .geometry import DyadicTentSystem, StripDomain
from .io import parse_matrix, parse_vector
from .windows import ball_reducer

Sampler = Callable[[np.ndarray], tuple]

FD_STEP = 1e-5


@dataclass(eq=False)
class CoefficientField:
    """Sampled operator div(A grad u) + B . grad u on a strip."""

    domain: StripDomain
    sampler: Sampler
    gradient: Callable | None = None
    spec: dict = field(default_factory=dict)

    def evaluate(self, points) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=float)
        A, B = self.sampler(pts)
        n = self.domain.n
        A = np.broadcast_to(np.asarray(A, dtype=complex), pts.shape[:-1] + (n, n)).copy()
        B = np.broadcast_to(np.asarray(B, dtype=complex), pts.shape[:-1] + (n,)).copy()
        return A, B

    def grad_A(self, points) -> np.ndarray:
        """dA[..., k, i, j] = d_k A_ij."""
        pts = np.asarray(points, dtype=float)
        if self.gradient is not None:
            n = self.domain.n
            return np.broadcast_to(np.asarray(self.gradient(pts), dtype=complex),
                                   pts.shape[:-1] + (n, n, n)).copy()
        return finite_difference_gradient(lambda p: self.evaluate(p)[0], pts)

    @cached_property
    def node_values(self) -> tuple[np.ndarray, np.ndarray]:
        """A on all nodes and B on rows 1..rows (B may be singular on the boundary)."""
        nodes = self.domain.nodes()
        A, _ = self.evaluate(nodes)
        _, B = self.evaluate(nodes[1:])
        return A, B

    @cached_property
    def cell_values(self) -> tuple[np.ndarray, np.ndarray]:
        """A and B at cell centres (rows of half-integer index, lateral half shifts)."""
        return self.evaluate(cell_centers(self.domain))

    @cached_property
    def constants(self) -> tuple[float, float]:
        A, _ = self.node_values
        Ac, _ = self.cell_values
        lam1, Lam1 = ellipticity_constants(A)
        lam2, Lam2 = ellipticity_constants(Ac)
        return min(lam1, lam2), max(Lam1, Lam2)

    @property
    def lam(self) -> float:
        return self.constants[0]

    @property
    def Lam(self) -> float:
        return self.constants[1]

    @cached_property
    def K(self) -> float:
        """Drift bound max |B| * delta over interior nodes."""
        _, B = self.node_values
        x0 = self.domain.x0[1:].reshape((-1,) + (1,) * self.domain.lateral_dims)
        return float(np.max(np.sqrt(np.sum(np.abs(B) ** 2, axis=-1)) * x0))

    def all_matrices(self) -> np.ndarray:
        A, _ = self.node_values
        Ac, _ = self.cell_values
        n = self.domain.n
        return np.concatenate([A.reshape(-1, n, n), Ac.reshape(-1, n, n)])

    def on_domain(self, domain: StripDomain) -> "CoefficientField":
        return CoefficientField(domain, self.sampler, self.gradient, dict(self.spec))


def cell_centers(domain: StripDomain) -> np.ndarray:
    """Centres of the tensor cells: shape (rows, M, ..., M, n)."""
    pts = domain.row_points(domain.half_x0)
    pts[..., 1:] += 0.5 * domain.lateral_mesh
    return pts


def finite_difference_gradient(func, pts: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Centred differences of a matrix-valued function; one-sided near x0 = 0."""
    n = pts.shape[-1]
    out = None
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        if k == 0:
            lo = pts[..., 0] - step < 0
            plus = func(pts + e)
            minus = func(np.where(lo[..., None], pts, pts - e))
            width = np.where(lo, step, 2 * step)[..., None, None]
            d = (plus - minus) / width
        else:
            d = (func(pts + e) - func(pts - e)) / (2 * step)
        if out is None:
            out = np.zeros(d.shape[:-2] + (n,) + d.shape[-2:], dtype=complex)
        out[..., k, :, :] = d
    return out


# --- generator families ----------------------------------------------------

SAFE_NAMES = {name: getattr(np, name) for name in
              ("sin", "cos", "tan", "exp", "log", "log1p", "sqrt", "abs", "sinh", "cosh", "tanh",
               "arctan", "minimum", "maximum", "where", "pi", "clip")}


def _compile(expr):
    if isinstance(expr, (int, float)):
        value = complex(expr)
        return lambda env: value
    if isinstance(expr, (list, tuple)) and len(expr) == 2 and all(isinstance(v, (int, float)) for v in expr):
        value = complex(expr[0], expr[1])
        return lambda env: value
    if not isinstance(expr, str):
        raise ConfigError(f"cannot interpret coefficient expression {expr!r}")
    code = compile(expr, "<coefficient>", "eval")
    for name in code.co_names:
        if name not in SAFE_NAMES and not (name.startswith("x") and name[1:].isdigit()) and name not in ("delta", "j"):
            raise ConfigError(f"name {name!r} not allowed in coefficient formula")
    return lambda env: eval(code, {"__builtins__": {}}, env)


def _env(pts):
    env = dict(SAFE_NAMES)
    for i in range(pts.shape[-1]):
        env[f"x{i}"] = pts[..., i]
    env["delta"] = pts[..., 0]
    env["j"] = 1j
    return env


def _profile(kind: str, amplitude: float, frequency: float, scale: float, cutoff: float):
    """Scalar profile g(x0) and its derivative for perturbations g(x0) * E."""
    if kind == "log":
        def g(t):
            return amplitude * np.sin(frequency * np.log1p(t / scale))

        def dg(t):
            return amplitude * frequency * np.cos(frequency * np.log1p(t / scale)) / (scale + t)
    elif kind == "sin":
        def g(t):
            return amplitude * np.sin(frequency * t)

        def dg(t):
            return amplitude * frequency * np.cos(frequency * t)
    elif kind == "ramp":
        def g(t):
            return amplitude * np.minimum(t, cutoff)

        def dg(t):
            return amplitude * (t < cutoff).astype(float)
    else:
        raise ConfigError(f"unknown profile {kind!r}")
    return g, dg


def _drift(spec, n: int):
    """Return B(points) for a drift spec."""
    if spec is None:
        return lambda pts: np.zeros(pts.shape[:-1] + (n,), dtype=complex)
    if isinstance(spec, (list, tuple)):
        vec = parse_vector(spec)
        if vec.size != n:
            raise ConfigError(f"drift vector has length {vec.size}, expected {n}")
        return lambda pts: np.broadcast_to(vec, pts.shape[:-1] + (n,))
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return _drift(spec["value"], n)
    if kind == "inverse_distance":
        K = complex(*spec["K"]) if isinstance(spec["K"], (list, tuple)) else complex(spec["K"])
        e = np.zeros(n, dtype=complex)
        e[int(spec.get("direction", 0))] = 1.0

        def B(pts):
            return (K / pts[..., 0])[..., None] * e
        return B
    if kind == "formula":
        comps = [_compile(c) for c in spec["value"]]

        def B(pts):
            env = _env(pts)
            return np.stack([np.broadcast_to(np.asarray(c(env), dtype=complex), pts.shape[:-1]) for c in comps], axis=-1)
        return B
    raise ConfigError(f"unknown drift kind {kind!r}")


def _matrix(value, n: int) -> np.ndarray:
    M = parse_matrix(value) if not isinstance(value, np.ndarray) else np.asarray(value, dtype=complex)
    if M.shape != (n, n):
        raise ConfigError(f"matrix has shape {M.shape}, expected {(n, n)}")
    return M


def make_field(domain: StripDomain, spec: dict, check: bool = True) -> CoefficientField:
    """Build a field from a generator spec and validate its ellipticity.

    Families: ``constant`` (A, B), ``block`` (A00 = 1, lateral block),
    ``t_independent`` (A depends on x' only), ``oscillatory`` (base plus
    g(x0) E), ``formula`` (expression strings).  Any family accepts
    ``perturbations``: a list of {matrix, amplitude, profile, frequency,
    scale, cutoff} added as g(x0) E, and a ``B`` drift spec.
    """
    n = domain.n
    family = spec.get("family")
    if family is None:
        raise ConfigError("field spec needs a 'family'")
    drift = _drift(spec.get("B"), n)
    grad = None

    if family == "constant":
        A0 = _matrix(spec["A"], n)

        def base(pts):
            return np.broadcast_to(A0, pts.shape[:-1] + (n, n))

        def dbase(pts):
            return np.zeros(pts.shape[:-1] + (n, n, n), dtype=complex)
    elif family == "block":
        lat = _matrix(spec["lateral"], n - 1)
        A0 = np.zeros((n, n), dtype=complex)
        A0[0, 0] = 1.0
        A0[1:, 1:] = lat

        def base(pts):
            return np.broadcast_to(A0, pts.shape[:-1] + (n, n))

        def dbase(pts):
            return np.zeros(pts.shape[:-1] + (n, n, n), dtype=complex)
    elif family == "t_independent":
        A0 = _matrix(spec["A"], n)
        E = _matrix(spec["E"], n)
        eps = float(spec.get("amplitude", 0.1))
        freq = float(spec.get("frequency", 1.0))
        P = domain.lateral_period

        def base(pts):
            s = np.sin(2 * math.pi * freq * pts[..., 1] / P)
            return A0 + (eps * s)[..., None, None] * E

        def dbase(pts):
            out = np.zeros(pts.shape[:-1] + (n, n, n), dtype=complex)
            c = np.cos(2 * math.pi * freq * pts[..., 1] / P) * 2 * math.pi * freq / P
            out[..., 1, :, :] = (eps * c)[..., None, None] * E
            return out
    elif family == "oscillatory":
        A0 = _matrix(spec["A"], n)
        perts = [{"matrix": spec["E"], "amplitude": spec.get("amplitude", 0.1),
                  "profile": spec.get("profile", "log"), "frequency": spec.get("frequency", 4.0),
                  "scale": spec.get("scale", 0.05), "cutoff": spec.get("cutoff", 1.0)}]
        spec = dict(spec, perturbations=perts + list(spec.get("perturbations", [])))

        def base(pts):
            return np.broadcast_to(A0, pts.shape[:-1] + (n, n))

        def dbase(pts):
            return np.zeros(pts.shape[:-1] + (n, n, n), dtype=complex)
    elif family == "formula":
        entries = spec["A"]
        if len(entries) != n or any(len(r) != n for r in entries):
            raise ConfigError("formula matrix has the wrong shape")
        comps = [[_compile(e) for e in row] for row in entries]

        def base(pts):
            env = _env(pts)
            out = np.empty(pts.shape[:-1] + (n, n), dtype=complex)
            for i in range(n):
                for j in range(n):
                    out[..., i, j] = comps[i][j](env)
            return out
        dbase = None
    else:
        raise ConfigError(f"unknown field family {family!r}")

    terms = []
    for p in spec.get("perturbations", []):
        E = _matrix(p["matrix"], n)
        g, dg = _profile(p.get("profile", "sin"), float(p.get("amplitude", 0.0)), float(p.get("frequency", 1.0)),
                         float(p.get("scale", 1.0)), float(p.get("cutoff", 1.0)))
        terms.append((E, g, dg))

    def sampler(pts):
        A = np.array(base(pts), dtype=complex)
        for E, g, _ in terms:
            A = A + g(pts[..., 0])[..., None, None] * E
        return A, drift(pts)

    if dbase is not None:
        def grad(pts):
            dA = np.array(dbase(pts), dtype=complex)
            for E, _, dg in terms:
                dA[..., 0, :, :] += dg(pts[..., 0])[..., None, None] * E
            return dA

    fld = CoefficientField(domain, sampler, grad, dict(spec))
    if check:
        check_uniform_ellipticity(fld.all_matrices())
    return fld


# --- Carleson densities ----------------------------------------------------


@dataclass
class CarlesonDensity:
    """Density values on node rows 1..rows (weight delta(x) included)."""

    domain: StripDomain
    values: np.ndarray
    which: str

    def total(self) -> float:
        return float(self.values.sum() * self.domain.cell_volume)


def _pointwise_weight(field: CoefficientField, pts: np.ndarray, which: str) -> np.ndarray:
    A, B = field.evaluate(pts)
    dA = field.grad_A(pts)
    b2 = np.sum(np.abs(B) ** 2, axis=-1)
    if which == "mu":
        return np.sum(np.abs(dA) ** 2, axis=(-3, -2, -1)) + b2
    if which == "mu_prime":
        d0_row = np.sum(np.abs(dA[..., 0, 0, :]) ** 2, axis=-1)
        n = A.shape[-1]
        div_row = sum(dA[..., j, 0, j] for j in range(n))
        return d0_row + np.abs(div_row) ** 2 + b2
    raise ValueError(f"unknown density {which!r}")


def carleson_density(field: CoefficientField, which: str = "mu") -> CarlesonDensity:
    """sup over B_{delta/2}(x) of the coefficient weight, times delta(x).

    ``which='mu'`` uses |grad A|^2 + |B|^2 (Frobenius over all derivatives);
    ``which='mu_prime'`` uses sum_j |d0 A_0j|^2 + |sum_j d_j A_0j|^2 + |B|^2.
    """
    if which in ("μ", "mu"):
        which = "mu"
    elif which in ("μ′", "mu'", "mu_prime"):
        which = "mu_prime"
    dom = field.domain
    pts = dom.row_points(dom.x0[1:])
    g = _pointwise_weight(field, pts, which)
    x0 = dom.x0[1:]
    red = ball_reducer(x0, x0 / 2, x0, dom.lateral_mesh, dom.lateral_count, dom.lateral_dims)
    sup = red.max(g)
    values = sup * x0.reshape((-1,) + (1,) * dom.lateral_dims)
    return CarlesonDensity(dom, values, which)


@dataclass
class CarlesonProfile:
    radii: list
    ratios: list
    norm: float
    slope: float
    not_carleson: bool


def carleson_profile(density: CarlesonDensity, tents: DyadicTentSystem, all_centers: bool = False,
                     growth_threshold: float = 1.5) -> CarlesonProfile:
    """Tent ratios mu(T(Delta_r)) / sigma(Delta_r) per dyadic level plus a growth test.

    The growth test fits log ratio against log r over the three largest
    radii and flags slopes above ``growth_threshold``.
    """
    dom = density.domain
    x0 = dom.x0[1:]
    weighted = density.values * dom.cell_volume
    ratios = []
    for level, r in enumerate(tents.radii):
        red = ball_reducer([0.0], [r], x0, dom.lateral_mesh, dom.lateral_count, dom.lateral_dims)
        mass = red.sum(weighted)[0]
        if all_centers:
            best = float(mass.max())
        else:
            idx = np.round(tents.centers[level] / dom.lateral_mesh).astype(int) % dom.lateral_count
            best = float(mass[tuple(idx.T)].max())
        ratios.append(best / tents.surface_measure(r))
    ratios_arr = np.array(ratios)
    norm = float(ratios_arr.max()) if ratios else 0.0
    slope = 0.0
    k = min(3, len(ratios))
    if k >= 2 and np.all(ratios_arr[:k] > 0):
        slope = float(np.polyfit(np.log(tents.radii[:k]), np.log(ratios_arr[:k]), 1)[0])
    return CarlesonProfile(list(map(float, tents.radii)), list(map(float, ratios)), norm, slope,
                           slope > growth_threshold)


def carleson_norm(density: CarlesonDensity, tents: DyadicTentSystem) -> float:
    """max over tents of mu(T(Delta_r)) / sigma(Delta_r)."""
    return carleson_profile(density, tents).norm


# --- structural normalization ---------------------------------------------


def normalize_first_row(field: CoefficientField, p: float | None = None, tol: float = 1e-6):
    """Equivalent operator with A00 = 1 and a real first row.

    Multiplying the equation by alpha = 1/A00 gives A -> alpha A and
    B_j -> alpha B_j - sum_i (d_i alpha) A_ij.  Then i Im A_0j moves from
    A_0j to A_j0, adding i d_0 Im A_0j to B_j and -i d_j Im A_0j to B_0.
    Returns the new field and the added lower-order drift as a callable.
    """
    n = field.domain.n
    A_nodes = field.all_matrices()
    if np.min(np.abs(A_nodes[:, 0, 0])) < tol:
        raise A00NearZero(f"min |A00| = {np.min(np.abs(A_nodes[:, 0, 0])):.3g}")

    def sampler(pts):
        A, B = field.evaluate(pts)
        dA = field.grad_A(pts)
        alpha = 1.0 / A[..., 0, 0]
        dalpha = -dA[..., :, 0, 0] * (alpha**2)[..., None]
        At = alpha[..., None, None] * A
        dAt = dalpha[..., :, None, None] * A[..., None, :, :] + alpha[..., None, None, None] * dA
        Bt = alpha[..., None] * B - np.einsum("...i,...ij->...j", dalpha, A)
        g = At[..., 0, 1:].imag.copy()
        dg = dAt[..., :, 0, 1:].imag  # [..., k, j]
        At[..., 0, 1:] -= 1j * g
        At[..., 1:, 0] += 1j * g
        Bt[..., 1:] += 1j * dg[..., 0, :]
        Bt[..., 0] -= 1j * sum(dg[..., j, j - 1] for j in range(1, n))
        return At, Bt

    def remainder(pts):
        _, B = field.evaluate(pts)
        A, _ = field.evaluate(pts)
        _, Bt = sampler(pts)
        return Bt - B / A[..., 0, 0][..., None]

    new = CoefficientField(field.domain, sampler, None, dict(field.spec, normalized=True))
    mats_old = A_nodes
    mats_new = new.all_matrices()
    lam_new, _ = ellipticity_constants(mats_new)
    if lam_new <= 0:
        warnings.warn("row normalization destroyed uniform ellipticity", stacklevel=2)
    if p is not None and delta_p(mats_old, p) > 0 and delta_p(mats_new, p) <= 0:
        warnings.warn(f"row normalization destroyed {p}-ellipticity", stacklevel=2)
    return new, remainder


def sesquilinear_form(field: CoefficientField, u, grad_u, phi, grad_phi, order: int = 6, segments: int | None = None,
                      lateral: int | None = None) -> complex:
    """a(u, phi) = int <A grad u, grad phi> - int (B . grad u) conj(phi) by quadrature.

    Gauss-Legendre in x0 (composite), periodic trapezoid rule laterally.
    ``u``, ``phi`` map points (..., n) to values; ``grad_*`` to gradients.
    """
    dom = field.domain
    segs = segments or max(8, dom.rows)
    g, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, dom.h, segs + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    t = (mid[:, None] + half[:, None] * g[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    Ml = lateral or dom.lateral_count * 4
    xl = np.arange(Ml) * dom.lateral_period / Ml
    grids = np.meshgrid(t, *([xl] * dom.lateral_dims), indexing="ij")
    pts = np.stack(grids, axis=-1)
    weight = wt.reshape((-1,) + (1,) * dom.lateral_dims) * (dom.lateral_period / Ml) ** dom.lateral_dims
    A, B = field.evaluate(pts)
    gu = np.asarray(grad_u(pts))
    gp = np.asarray(grad_phi(pts))
    integrand = np.einsum("...ij,...j,...i->...", A, gu, np.conj(gp))
    integrand -= np.sum(B * gu, axis=-1) * np.conj(np.asarray(phi(pts)))
    return complex(np.sum(integrand * weight))
