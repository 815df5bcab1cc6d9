"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (and immediately with ``-s``).
"""

import time

import numpy as np

from mfroute import evaluate_cost, mean_field_tax, propagate, solve, stationarity_residual, value_function
from mfroute.cli import main
from mfroute.dynamics import random_policy, spatial_entropy, tie_spread
from mfroute.model import PolicyProfile
from mfroute.scenarios import (
    STRONG_INTERACTION,
    WEAK_INTERACTION,
    build_grid_spec,
    default_grid,
    line3_spec,
    manhattan,
    save_spec,
)
from mfroute.sim import estimate_epsilon, estimate_expected_tax

import oracles
from instances import LINE3, random_spec

RESULTS = []
SEEDS = (0, 1, 2)
POPULATIONS = (100, 1000, 10000)


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_1_solver_properties():
    rng = np.random.default_rng(20240601)
    shapes = [(3, 1, 2), (4, 2, 3), (5, 3, 2), (6, 2, 3), (6, 3, 3), (3, 3, 3), (5, 1, 3)]
    specs = [random_spec(rng, V=V, L=L, T=T) for V, L, T in shapes]
    t0 = time.perf_counter()
    arts = [solve(s) for s in specs]
    elapsed = time.perf_counter() - t0
    rows = max(np.abs(np.where(s.graph.mask, a.q, 0).sum(-1) - 1).max() for s, a in zip(specs, arts))
    res = max(stationarity_residual(s, a) for s, a in zip(specs, arts))
    ok = rows < 1e-9 and res < 1e-8 and elapsed < 1.0
    record(1, "solver properties", ok, f"{len(specs)} instances, row err {rows:.1e}, residual {res:.1e}, {elapsed:.3f}s")


def _gap(ref, q):
    return max(
        np.abs(np.asarray(row) - q[l, t, i, : len(row)]).max()
        for l, per_t in enumerate(ref)
        for t, per_i in enumerate(per_t)
        for i, row in enumerate(per_i)
    )


def test_2_oracle_equivalence():
    rng = np.random.default_rng(7)
    specs = [line3_spec()] + [random_spec(rng, L=2, T=2, graph=LINE3, integer_costs=True) for _ in range(4)]
    t0 = time.perf_counter()
    worst = 0.0
    for spec in specs:
        succ = spec.graph.successors
        C = oracles.ragged(spec.travel_cost, succ)
        R = oracles.ragged(spec.reference_policy, succ)
        q = solve(spec).q
        worst = max(worst, _gap(oracles.fixed_point_equilibrium(C, R, succ, spec.interaction), q))
        worst = max(worst, _gap(oracles.projected_gradient_equilibrium(C, R, succ, spec.interaction), q))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10.0
    record(2, "oracle equivalence", ok, f"{len(specs)} instances, max entry gap {worst:.1e}, {elapsed:.2f}s")


def test_3_equal_cost_under_equilibrium_tax():
    rng = np.random.default_rng(99)
    specs = [line3_spec(horizon=3), random_spec(rng, V=5, L=2, T=3), random_spec(rng, V=6, L=3, T=3)]
    rel = 0.0
    spread = 0.0
    for spec in specs:
        art = solve(spec)
        tax = mean_field_tax(spec, art.policy)
        v0 = value_function(art, spec.initial_density, 0)
        for _ in range(100):
            total = evaluate_cost(spec, random_policy(spec, rng), tax).total
            rel = max(rel, float(np.max(np.abs(total - v0) / np.maximum(np.abs(v0), 1e-300))))
        # the reference policy is strictly positive, so it reaches every reachable node
        R = np.broadcast_to(spec.reference_policy, art.q.shape)
        reach = propagate(spec, PolicyProfile(R))
        spread = max(spread, float(np.nanmax(tie_spread(spec, tax, reach))))
    ok = rel < 1e-8 and spread < 1e-6
    record(3, "equal cost for all policies", ok, f"max relative gap {rel:.1e}, successor spread {spread:.1e}")


def test_4_empirical_tax_converges():
    spec = line3_spec()
    pol = solve(spec).policy
    t0 = time.perf_counter()
    traces = {}
    for seed in SEEDS:
        traces[seed] = [estimate_expected_tax(spec, pol, n, 50, seed).convergence_error for n in POPULATIONS]
    elapsed = time.perf_counter() - t0
    good = [s for s, g in traces.items() if g[0] > g[1] > g[2] and g[2] < 0.05]
    ok = len(good) >= 2 and elapsed < 60.0
    shown = "; ".join(f"seed {s}: " + ", ".join(f"{x:.3f}" for x in g) for s, g in traces.items())
    record(4, "empirical tax convergence", ok, f"{len(good)}/3 seeds qualify ({shown}), {elapsed:.1f}s")


def test_5_exploitability_shrinks():
    spec = line3_spec()
    pol = solve(spec).policy
    ok = True
    ratios = []
    parts = []
    for seed in SEEDS:
        eps = np.array([estimate_epsilon(spec, n, 50, seed, policy=pol)[0] for n in POPULATIONS])
        ok &= bool(np.all(np.diff(eps, axis=0) <= 0))
        ratios.append(eps[-1] / np.maximum(eps[0], 1e-300))
        parts.append(f"seed {seed}: " + " > ".join(f"{e.max():.3f}" for e in eps))
    halved = all(np.all(r < 0.5) for r in ratios)
    detail = "; ".join(parts) + f"; eps(10000) < eps(100)/2 in all seeds: {halved}"
    record(5, "exploitability nonincreasing", ok, detail)


def _destination_mass(p, cells, dest):
    near = [n for n, c in enumerate(cells) if c is not None and manhattan(c, dest) <= 2]
    return float(p[near].sum())


def test_6_grid_spread_contrast():
    grid = default_grid()
    t0 = time.perf_counter()
    out = {}
    for name, A in (("strong", STRONG_INTERACTION), ("weak", WEAK_INTERACTION)):
        spec, cells = build_grid_spec(grid, 50, A)
        p = propagate(spec, solve(spec).policy).p
        out[name] = (
            [spatial_entropy(p[l, 27]) for l in range(2)],
            [_destination_mass(p[l, 48], cells, grid.destinations[l]) for l in range(2)],
        )
    elapsed = time.perf_counter() - t0
    (hs, ms), (hw, mw) = out["strong"], out["weak"]
    ok = all(a > b for a, b in zip(hs, hw)) and min(ms + mw) > 0.5 and elapsed < 60.0
    detail = (
        f"entropy t=27 strong {hs[0]:.3f}/{hs[1]:.3f} vs weak {hw[0]:.3f}/{hw[1]:.3f}, "
        f"mass near destination t=48 min {min(ms + mw):.3f}, {elapsed:.2f}s"
    )
    record(6, "grid spread contrast", ok, detail)


def test_7_simulate_deterministic(tmp_path, monkeypatch):
    save_spec(line3_spec(), tmp_path / "s.json")

    def run(out, *extra):
        args = ["simulate", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path / out)]
        code = main(args + ["--n", "1000", "--reps", "50", "--seed", "7", *extra])
        return code, {p.name: p.read_bytes() for p in sorted((tmp_path / out).iterdir())}

    runs = [run("a"), run("b"), run("c", "--threads", "4")]
    monkeypatch.setenv("MFR_THREADS", "3")
    runs.append(run("d"))
    ok = all(c == 0 for c, _ in runs) and all(f == runs[0][1] for _, f in runs)
    record(7, "simulate determinism", ok, f"{len(runs)} runs (threads 1, 1, 4, env 3) identical: {ok}")
