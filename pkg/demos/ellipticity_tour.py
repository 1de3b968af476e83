#!/usr/bin/env python3
"""Exponent ranges of a few constant matrices.

Prints (p0, p0') from the phase profile, the bisection on delta_p and, when
the imaginary part is symmetric, the closed-form interval.  Then walks p
across the range for (1+i)I and shows delta_p changing sign at the ends.
"""

import math

import numpy as np

from pelliptic.ellipticity import delta_p, p_range, p_range_bisection, p_range_symmetric
from pelliptic.errors import NotSymmetricImaginaryPart

MATRICES = {
    "identity": np.eye(2),
    "(1+0.5i)I": (1 + 0.5j) * np.eye(2),
    "(1+i)I": (1 + 1j) * np.eye(2),
    "(1+2i)I": (1 + 2j) * np.eye(2),
    "skew imaginary": np.array([[1, 0.8j], [-0.8j, 1]]),
    "block": np.array([[1, 0], [0, 1 + 0.5j]]),
}


def fmt(r):
    return f"({r[0]:.6f}, {r[1]:.6f})" if math.isfinite(r[1]) else f"({r[0]:.6f}, inf)"


def main():
    print(f"{'matrix':<16} {'phase profile':<24} {'bisection':<24} symmetric form")
    for name, A in MATRICES.items():
        try:
            sym = fmt(p_range_symmetric(A))
        except NotSymmetricImaginaryPart:
            sym = "n/a"
        print(f"{name:<16} {fmt(p_range(A)):<24} {fmt(p_range_bisection(A)):<24} {sym}")

    A = (1 + 1j) * np.eye(2)
    p0, p1 = p_range(A)
    print(f"\n(1+i)I: p0 = {p0:.6f} (4 - 2 sqrt 2 = {4 - 2 * math.sqrt(2):.6f}), p0' = {p1:.6f}")
    for p in (1.1, p0, 1.5, 2.0, 4.0, p1, 8.0):
        print(f"  p = {p:7.4f}  delta_p = {delta_p(A, p):+.3e}")


if __name__ == "__main__":
    main()
