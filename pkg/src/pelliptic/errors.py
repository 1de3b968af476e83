"""Exception types raised across the package."""


class PEllipticError(Exception):
    """Base class for all package errors."""


class NotElliptic(PEllipticError):
    def __init__(self, lam, message=None):
        self.lam = float(lam)
        super().__init__(message or f"matrix is not uniformly elliptic (lambda={self.lam:.6g})")


class DegenerateDenominator(PEllipticError):
    """The bilinear pairing vanishes identically on the sphere."""


class NotSymmetricImaginaryPart(PEllipticError):
    pass


class InvalidGeometry(PEllipticError, ValueError):
    pass


class NotBijective(PEllipticError):
    def __init__(self, min_d0):
        self.min_d0 = float(min_d0)
        super().__init__(f"pullback map is not bijective (min d0 rho0={self.min_d0:.6g})")


class SingularJacobian(PEllipticError):
    pass


class A00NearZero(PEllipticError):
    pass


class NoConvergence(PEllipticError):
    def __init__(self, iterations, residual):
        self.iterations = int(iterations)
        self.residual = float(residual)
        super().__init__(f"no convergence after {self.iterations} iterations (residual {self.residual:.3e})")


class ExponentOutOfRange(PEllipticError, ValueError):
    pass


class ConfigError(PEllipticError, ValueError):
    pass
