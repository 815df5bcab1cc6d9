"""Empirical expected tax versus its mean-field limit as the population grows."""

import argparse

from mfroute import solve
from mfroute.scenarios import load_spec
from mfroute.sim import estimate_expected_tax


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spec", default="data/line3.json")
    ap.add_argument("--n", default="100,1000,10000")
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--seeds", default="0,1,2")
    args = ap.parse_args()
    spec = load_spec(args.spec)
    pol = solve(spec).policy
    ns = [int(x) for x in args.n.split(",")]
    print("seed," + ",".join(f"gap_n{n}" for n in ns) + ",max_excluded")
    for seed in (int(s) for s in args.seeds.split(",")):
        reps = [estimate_expected_tax(spec, pol, n, args.reps, seed) for n in ns]
        gaps = ",".join(f"{r.convergence_error:.5f}" for r in reps)
        print(f"{seed},{gaps},{max(r.excluded_fraction.max() for r in reps):.3f}")


if __name__ == "__main__":
    main()
