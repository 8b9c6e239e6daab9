#!/usr/bin/env python3
"""Emit estimand-weight curves over the ICC and the worst-case settings.

Writes one CSV per scheme with columns (rho, lambda_1, lambda_2) for a
two-point size mixture, and prints the ICC and sampling probability that
maximize the weighted exchangeable estimator's bias.

Example:
  python scripts/weight_curves.py --k1 20 --k2 100 --out out/
"""
import argparse
import csv
import pathlib
import sys

import numpy as np

from pbcrt import (
    PopulationMixture,
    VarianceComponents,
    WeightScheme,
    estimand_weights,
    optimal_icc,
    optimal_sampling_prob,
)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--k1", type=int, default=20)
    ap.add_argument("--k2", type=int, default=100)
    ap.add_argument("--p1", type=float, default=0.5)
    ap.add_argument("--cac", type=float, default=0.8,
                    help="cluster auto-correlation for the nested scheme")
    ap.add_argument("--step", type=float, default=0.005)
    ap.add_argument("--out", default="out")
    args = ap.parse_args(argv)

    mix = PopulationMixture.two_point(args.p1, args.k1, args.k2, 0.0, 0.0)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = np.arange(0.0, 1.0, args.step)
    for scheme, cac in ((WeightScheme.EMEW, 1.0), (WeightScheme.NEMEW, args.cac)):
        path = out / f"weights_{scheme}_K{args.k1}_{args.k2}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "lambda_1", "lambda_2"])
            for rho in grid:
                vc = VarianceComponents.from_iccs(1.0, float(rho), cac)
                lam = estimand_weights(scheme, mix, vc).lambdas
                w.writerow([repr(float(rho))] + [repr(x) for x in lam])
        print(f"wrote {path}")

    rho_star = optimal_icc(args.k1, args.k2)
    print(f"bias-maximizing ICC: {rho_star:.6g}")
    print(f"bias-maximizing P(u=1) at that ICC: "
          f"{optimal_sampling_prob(args.k1, args.k2, rho_star):.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
