#!/usr/bin/env python3
"""Fitted constants for the block-form preset, then a look at the good-lambda sets.

The second half explains why the good-lambda constants on the oscillatory
preset come out as zero: above the threshold nu_0 the large-aperture square
function never exceeds nu, so the left-hand set is empty at every level.
"""

import numpy as np

from pelliptic.config import ExperimentConfig
from pelliptic.estimators import good_lambda_functions, good_lambda_threshold
from pelliptic.experiments import Experiment


def main():
    exp = Experiment(ExperimentConfig.load("block_form", meshes=[1 / 32, 1 / 64]))
    for cid in ("reverse_holder", "dissipativity", "square_ntm"):
        rep = exp.run(cid)
        trend = ", ".join(f"{t:.3f}" for t in rep.trend)
        print(f"{cid:<16} verdict={rep.verdict:<5} fitted={rep.fitted:.3f} per level [{trend}]")

    osc = Experiment(ExperimentConfig.load("oscillatory"))
    print("\noscillatory preset, finest level")
    for sol in osc.levels[-1]:
        fx = good_lambda_functions(sol, 2.0, 1.0, 2.0)
        nu0 = good_lambda_threshold(fx["N_b"], 2.0)
        Sa = fx["S_a"].values
        print(f"  max S_a / nu_0 = {Sa.max() / nu0:.3f}   max S_a / N_b = {np.max(Sa / fx['N_b'].values):.3f}")


if __name__ == "__main__":
    main()
