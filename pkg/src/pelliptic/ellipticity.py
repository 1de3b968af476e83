"""Algebraic p-ellipticity quantities of complex coefficient matrices.

Every minimum over a sphere used here is the minimum of a real quadratic
form, so it is computed as the smallest eigenvalue of a symmetric matrix
acting on ``(Re xi, Im xi)``.  The only genuinely nonlinear quantity is
``mu_A``, which reduces to a one-dimensional search over a phase angle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateDenominator, NotElliptic, NotSymmetricImaginaryPart

#: Positivity decisions use this band; values inside it are indeterminate.
POSITIVITY_TOL = 1e-9


def as_matrix(A) -> np.ndarray:
    """Validate and convert to a complex square array (or a stack of them)."""
    M = np.asarray(A, dtype=complex)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {M.shape}")
    if M.shape[-1] < 2:
        raise ValueError("dimension must be at least 2")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    return M


def positivity(value: float, tol: float = POSITIVITY_TOL) -> str:
    """Classify a margin as 'positive', 'negative' or 'indeterminate'."""
    if value > tol:
        return "positive"
    if value < -tol:
        return "negative"
    return "indeterminate"


def conjugate_exponent(p: float) -> float:
    if p <= 1:
        raise ValueError(f"exponent must exceed 1, got {p}")
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _realify(M: np.ndarray) -> np.ndarray:
    """Real 2n x 2n matrix of xi -> M xi in the coordinates (Re xi, Im xi)."""
    R, S = M.real, M.imag
    top = np.concatenate([R, -S], axis=-1)
    bottom = np.concatenate([S, R], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _min_eig(M: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(_sym(M))[..., 0]


def _unique_matrices(M: np.ndarray) -> np.ndarray:
    n = M.shape[-1]
    flat = M.reshape(-1, n, n)
    if flat.shape[0] == 1:
        return flat
    return np.unique(flat, axis=0)


def hermitian_part(A) -> np.ndarray:
    A = as_matrix(A)
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def ellipticity_constants(A) -> tuple[float, float]:
    """(lambda, Lambda) without raising; lambda may be nonpositive."""
    A = _unique_matrices(as_matrix(A))
    lam = float(np.min(np.linalg.eigvalsh(hermitian_part(A))[..., 0]))
    Lam = float(np.max(np.linalg.norm(A, ord=2, axis=(-2, -1))))
    return lam, Lam


def check_uniform_ellipticity(A, tol: float = POSITIVITY_TOL) -> tuple[float, float]:
    """Lower and upper ellipticity constants; raises NotElliptic if lambda <= tol.

    Accepts a single matrix or a stack (a sampled field); for a stack the
    minimum of lambda and maximum of Lambda are returned.
    """
    lam, Lam = ellipticity_constants(A)
    if lam <= tol:
        raise NotElliptic(lam)
    return lam, Lam


def p_form_matrix(A, p: float) -> np.ndarray:
    """Symmetric real matrix of xi -> Re<A xi, J_p xi> in (Re xi, Im xi)."""
    A = as_matrix(A)
    q = conjugate_exponent(p)
    n = A.shape[-1]
    weights = np.concatenate([np.full(n, 1.0 / p), np.full(n, 1.0 / q)])
    return _sym(weights[:, None] * _realify(A))


def delta_p(A, p: float) -> float:
    """Minimum of Re<A xi, J_p xi> over the complex unit sphere.

    J_p(alpha + i beta) = alpha/p + i beta/p'.  For a stack of matrices the
    minimum over the stack is returned.
    """
    if not p > 1:
        raise ValueError(f"exponent must exceed 1, got {p}")
    return float(np.min(_min_eig(p_form_matrix(_unique_matrices(as_matrix(A)), p))))


def _bilinear_parts(As: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts of xi^T As xi as symmetric 2n x 2n forms."""
    n = As.shape[-1]
    Rm = _realify(As)
    flip = np.diag(np.concatenate([np.ones(n), -np.ones(n)]))
    swap = np.block([[np.zeros((n, n)), np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    return _sym(flip @ Rm), _sym(swap @ Rm)


def _phase_profile(A: np.ndarray):
    """Return theta -> spectral radius of the normalized bilinear form."""
    As = 0.5 * (A + A.T)
    Hr = _sym(_realify(hermitian_part(A)))
    w, V = np.linalg.eigh(Hr)
    if w[0] <= 0:
        raise NotElliptic(w[0])
    Winv = V / np.sqrt(w)
    Qre, Qim = _bilinear_parts(As)
    Gre = Winv.T @ Qre @ Winv
    Gim = Winv.T @ Qim @ Winv

    def radius(theta: float) -> float:
        G = math.cos(theta) * Gre - math.sin(theta) * Gim
        ev = np.linalg.eigvalsh(_sym(G))
        return float(max(abs(ev[0]), abs(ev[-1])))

    return radius, max(np.abs(Gre).max(), np.abs(Gim).max())


def _mu_single(A: np.ndarray, grid: int) -> float:
    radius, scale = _phase_profile(A)
    if scale == 0.0:
        return math.inf
    thetas = np.linspace(0.0, math.pi, grid, endpoint=False)
    values = np.array([radius(t) for t in thetas])
    k = int(np.argmax(values))
    step = math.pi / grid
    res = minimize_scalar(
        lambda t: -radius(t),
        bounds=(thetas[k] - step, thetas[k] + step),
        method="bounded",
        options={"xatol": 1e-13},
    )
    best = max(values[k], -res.fun)
    if best <= 1e-14:
        return math.inf
    return 1.0 / best


def mu_A(A, grid: int = 256, strict: bool = False) -> float:
    """Infimum of Re<A xi, xi> / |<A xi, conj xi>| over the complex sphere.

    The denominator is the bilinear pairing sum_ij A_ij xi_j xi_i.  Writing
    its phase as e^{-i theta}, the ratio's reciprocal is the largest
    eigenvalue of a Hermitian-normalized real form, maximized over theta.

    When the pairing vanishes identically the set of admissible xi is empty;
    the convention is +inf (then p0 = 1), with a warning, or
    DegenerateDenominator if ``strict``.  For a field, the minimum over nodes.
    """
    mats = _unique_matrices(as_matrix(A))
    result = math.inf
    for M in mats:
        result = min(result, _mu_single(M, grid))
    if math.isinf(result):
        if strict:
            raise DegenerateDenominator("bilinear pairing vanishes identically")
        warnings.warn("bilinear pairing vanishes identically; reporting mu=inf", stacklevel=2)
    return result


MU_ONE_TOL = 1e-12


def p_range(A, grid: int = 256) -> tuple[float, float]:
    """Exponent interval (p0, p0') from mu_A; p0 = 2/(1+mu) clamped to [1, 2)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mu = mu_A(A, grid=grid)
    # real matrices sit at mu = 1 exactly; round-off must not produce a finite p0'
    if math.isinf(mu) or mu >= 1.0 - MU_ONE_TOL:
        return 1.0, math.inf
    p0 = 2.0 / (1.0 + mu)
    return float(p0), float(p0 / (p0 - 1.0))


def p_range_bisection(A, tol: float = 1e-12, band: float = 1e-13) -> tuple[float, float]:
    """Endpoints located by bisection on the sign of delta_p (cross-check)."""
    mats = _unique_matrices(as_matrix(A))
    scale = max(1.0, float(np.max(np.abs(mats))))

    def positive(p):
        return delta_p(mats, p) > band * scale

    if not positive(2.0):
        raise NotElliptic(delta_p(mats, 2.0) * 2)

    def edge(inside, outside):
        for _ in range(200):
            if abs(outside - inside) <= tol * max(1.0, abs(inside)):
                break
            mid = 0.5 * (inside + outside)
            if positive(mid):
                inside = mid
            else:
                outside = mid
        return 0.5 * (inside + outside)

    lo_probe = 1.0 + 1e-9
    p0 = 1.0 if positive(lo_probe) else edge(2.0, lo_probe)
    # p0' is the conjugate of p0 by the duality of delta_p; locate it independently
    hi_probe = 1e9
    p1 = math.inf if positive(hi_probe) else edge(2.0, hi_probe)
    return p0, p1


def _real_sym_parts(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _sym(A.real), _sym(A.imag)


def mu_tilde(A) -> float | None:
    """Infimum over real unit xi of <Re A xi, xi>/|<Im A xi, xi>|; None if Im A has no symmetric part."""
    mats = _unique_matrices(as_matrix(A))
    best = None
    for M in mats:
        Rs, Ss = _real_sym_parts(M)
        if not np.any(Ss):
            continue
        w, V = np.linalg.eigh(Rs)
        if w[0] <= 0:
            raise NotElliptic(w[0])
        Winv = V / np.sqrt(w)
        ev = np.linalg.eigvalsh(_sym(Winv.T @ Ss @ Winv))
        rho = max(abs(ev[0]), abs(ev[-1]))
        if rho <= 1e-15:
            continue
        value = float(1.0 / rho)
        best = value if best is None else min(best, value)
    return best


def p_range_symmetric(A, tol: float = 1e-12) -> tuple[float, float]:
    """Dissipativity interval for matrices whose imaginary part is symmetric."""
    mats = _unique_matrices(as_matrix(A))
    for M in mats:
        S = M.imag
        if np.max(np.abs(S - S.T)) > tol * max(1.0, np.max(np.abs(M))):
            raise NotSymmetricImaginaryPart("imaginary part is not symmetric")
    mt = mu_tilde(mats)
    if mt is None:
        return 1.0, math.inf
    # t = sqrt(mt^2+1) - mt is computed without cancellation
    t = 1.0 / (math.hypot(mt, 1.0) + mt)
    return float(1.0 + t * t), float(1.0 + 1.0 / (t * t))


def dissipativity_form_matrix(A, p: float) -> np.ndarray:
    """Symmetric matrix of the real form in (lambda, eta) in R^n x R^n.

    <R l, l> + <R e, e> + <C l, e> with C = sqrt(p'/p) S - sqrt(p/p') S^T,
    R = Re A, S = Im A.
    """
    A = as_matrix(A)
    q = conjugate_exponent(p)
    R, S = A.real, A.imag
    C = math.sqrt(q / p) * S - math.sqrt(p / q) * np.swapaxes(S, -1, -2)
    zero = np.zeros_like(R)
    top = np.concatenate([R, zero], axis=-1)
    bottom = np.concatenate([C, R], axis=-1)
    return _sym(np.concatenate([top, bottom], axis=-2))


def check_dissipativity_form(A, p: float) -> tuple[bool, float]:
    """Minimum of the dissipativity form over real unit pairs and its sign."""
    mats = _unique_matrices(as_matrix(A))
    margin = float(np.min(_min_eig(dissipativity_form_matrix(mats, p))))
    return margin > POSITIVITY_TOL, margin


def check_acond(A, p: float) -> bool:
    """|p-2| |<Im A xi, xi>| <= 2 sqrt(p-1) <Re A xi, xi> for every real xi."""
    if not p > 1:
        raise ValueError(f"exponent must exceed 1, got {p}")
    mt = mu_tilde(A)
    if mt is None:
        return True
    return abs(p - 2.0) <= 2.0 * math.sqrt(p - 1.0) * mt * (1.0 + 1e-12)


def pointwise_dissipativity_matrix(A, p: float) -> np.ndarray:
    """Symmetric matrix of (X, Y) -> (p-1)<R X,X> + <R Y,Y> + <(S-(p-1)S^T) X, Y>.

    With grad u = e^{i theta}(X + iY) this is the integrand
    Re<A grad u, grad(|u|^{p-2}u)> divided by |u|^{p-2}.
    """
    A = as_matrix(A)
    R, S = A.real, A.imag
    C = S - (p - 1.0) * np.swapaxes(S, -1, -2)
    zero = np.zeros_like(R)
    top = np.concatenate([(p - 1.0) * R, zero], axis=-1)
    bottom = np.concatenate([C, R], axis=-1)
    return _sym(np.concatenate([top, bottom], axis=-2))


def pointwise_dissipativity_constant(A, p: float) -> float:
    """Best lambda' with integrand >= lambda' |u|^{p-2}|grad u|^2 pointwise."""
    mats = _unique_matrices(as_matrix(A))
    return float(np.min(_min_eig(pointwise_dissipativity_matrix(mats, p))))


@dataclass
class EllipticityReport:
    lam: float
    Lam: float
    mu: float
    mu_tilde: float | None
    p0: float
    p0_prime: float
    delta_p_samples: list = field(default_factory=list)
    p0_bisection: float | None = None
    p0_prime_bisection: float | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def num(x):
            if x is None:
                return None
            return "inf" if math.isinf(x) else float(x)

        return {
            "lambda": num(self.lam),
            "Lambda": num(self.Lam),
            "mu": num(self.mu),
            "mu_tilde": num(self.mu_tilde),
            "p0": num(self.p0),
            "p0_prime": num(self.p0_prime),
            "p0_bisection": num(self.p0_bisection),
            "p0_prime_bisection": num(self.p0_prime_bisection),
            "delta_p_samples": [[float(p), float(d)] for p, d in self.delta_p_samples],
            "flags": list(self.flags),
        }


DEFAULT_SAMPLE_EXPONENTS = (1.1, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 10.0)


def ellipticity_report(A, exponents=DEFAULT_SAMPLE_EXPONENTS) -> EllipticityReport:
    """Full algebraic summary; raises NotElliptic for non-elliptic input."""
    lam, Lam = check_uniform_ellipticity(A)
    flags = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mu = mu_A(A)
    if math.isinf(mu):
        flags.append("empty_denominator_set")
    p0, p1 = p_range(A)
    b0, b1 = p_range_bisection(A)
    if abs(b0 - p0) > 1e-6 or (math.isfinite(p1) and abs(b1 - p1) > 1e-6 * p1):
        flags.append("p_range_cross_check_mismatch")
    samples = [(p, delta_p(A, p)) for p in exponents]
    return EllipticityReport(lam, Lam, mu, mu_tilde(A), p0, p1, samples, b0, b1, flags)
