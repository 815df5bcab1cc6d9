"""Single-deviator gain against the equilibrium for growing populations."""

import argparse

import numpy as np

from mfroute import solve
from mfroute.scenarios import load_spec
from mfroute.sim import estimate_epsilon


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spec", default="data/line3.json")
    ap.add_argument("--n", default="100,300,1000,3000,10000")
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--seeds", default="0,1,2")
    args = ap.parse_args()
    spec = load_spec(args.spec)
    pol = solve(spec).policy
    ns = [int(x) for x in args.n.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    mean = np.zeros(len(ns))
    print("seed,n,team,epsilon,se")
    for seed in seeds:
        for k, n in enumerate(ns):
            eps, se = estimate_epsilon(spec, n, args.reps, seed, policy=pol)
            mean[k] += eps.mean() / len(seeds)
            for l in range(spec.team_count):
                print(f"{seed},{n},{l},{eps[l]:.5f},{se[l]:.5f}")
    # descriptive only: no rate is claimed for this quantity
    keep = mean > 0
    if keep.sum() >= 2:
        slope = np.polyfit(np.log(np.array(ns)[keep]), np.log(mean[keep]), 1)[0]
        print(f"# log-log slope of the seed/team mean: {slope:.3f}")


if __name__ == "__main__":
    main()
