"""Grid-world density snapshots under a strong and a weak interaction matrix.

Writes per-team density grids and an entropy table to the output directory,
and a PNG panel per matrix when ``--plot`` is given.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from mfroute import propagate, solve
from mfroute.dynamics import spatial_entropy
from mfroute.scenarios import STRONG_INTERACTION, WEAK_INTERACTION, build_grid_spec, default_grid

SNAPSHOTS = (0, 15, 27, 48)


def density_grid(p, cells, grid):
    img = np.full((grid.height, grid.width), np.nan)
    for n, c in enumerate(cells):
        if c is not None:
            img[c[1], c[0]] = p[n]
    return img


def plot(path, name, frames, grid):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, len(SNAPSHOTS), figsize=(3 * len(SNAPSHOTS), 6), squeeze=False)
    for l in range(2):
        for k, t in enumerate(SNAPSHOTS):
            ax = axes[l, k]
            ax.imshow(frames[l][k], origin="lower", cmap="viridis")
            for x, y in grid.obstacles:
                ax.add_patch(plt.Rectangle((x - 0.5, y - 0.5), 1, 1, color="black"))
            ax.set_title(f"team {l}, t={t}")
            ax.set_xticks([])
            ax.set_yticks([])
    fig.suptitle(name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/grid")
    ap.add_argument("--horizon", type=int, default=50)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = default_grid()
    rows = []
    for name, A in (("strong", STRONG_INTERACTION), ("weak", WEAK_INTERACTION)):
        spec, cells = build_grid_spec(grid, args.horizon, A)
        p = propagate(spec, solve(spec).policy).p
        frames = [[density_grid(p[l, t], cells, grid) for t in SNAPSHOTS] for l in range(2)]
        for l in range(2):
            for k, t in enumerate(SNAPSHOTS):
                np.savetxt(out / f"{name}_team{l}_t{t:03d}.csv", frames[l][k], delimiter=",")
                rows.append([name, l, t, spatial_entropy(p[l, t])])
        if args.plot:
            plot(out / f"{name}.png", f"A = {A.tolist()}", frames, grid)
    with (out / "entropy.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["matrix", "team", "t", "entropy"])
        w.writerows(rows)
    for r in rows:
        print(*r)


if __name__ == "__main__":
    main()
