#!/usr/bin/env python3
"""Mesh convergence of the strip solver on closed-form solutions.

For a constant matrix the datum exp(2 pi i x1) on the bottom of the unit strip
gives u = sinh(c (1 - x0)) / sinh(c) exp(2 pi i x1) with c = 2 pi sqrt(A11 / A00)
when A is diagonal.  Errors should drop by about four per halving.
"""

import cmath
import math

import numpy as np

from pelliptic.coefficients import make_field
from pelliptic.geometry import build_strip
from pelliptic.solver import solve_field

CASES = {
    "Laplace": ({"family": "constant", "A": [[1, 0], [0, 1]]}, 1.0),
    "(1+i)I": ({"family": "constant", "A": [[[1, 1], 0], [0, [1, 1]]]}, 1.0),
    "block 1+0.5i": ({"family": "block", "lateral": [[[1, 0.5]]]}, cmath.sqrt(1 + 0.5j)),
}


def l2_error(sol, c):
    nodes = sol.domain.nodes()
    exact = np.sinh(c * (1 - nodes[..., 0])) / np.sinh(c) * np.exp(2j * np.pi * nodes[..., 1])
    w = np.ones(sol.domain.rows + 1)
    w[[0, -1]] = 0.5
    return math.sqrt(np.sum(w[:, None] * np.abs(sol.u - exact) ** 2) * sol.domain.cell_volume)


def main():
    meshes = (1 / 16, 1 / 32, 1 / 64, 1 / 128)
    for name, (spec, factor) in CASES.items():
        errs = []
        for m in meshes:
            sol = solve_field(make_field(build_strip(2, 1.0, m), spec), lambda xl: np.exp(2j * np.pi * xl[..., 0]))
            errs.append(l2_error(sol, 2 * math.pi * factor))
        orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        print(f"{name:<14} errors " + " ".join(f"{e:.2e}" for e in errs)
              + "  orders " + " ".join(f"{k:.2f}" for k in orders))


if __name__ == "__main__":
    main()
