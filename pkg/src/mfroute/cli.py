"""Command-line front end.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import export
from .dynamics import propagate, spatial_entropy
from .model import MFRouteError, SingularInteraction, validate_spec
from .scenarios import ParseError, ValidationError, load_spec
from .sim import estimate_epsilon, estimate_expected_tax
from .solver import solve, stationarity_residual, value_function

OK, INPUT_ERROR, NUMERIC_ERROR = 0, 2, 3
DEFAULT_SNAPSHOTS = (0, 15, 27, 48)


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load(args):
    literal = True if getattr(args, "literal_costs", False) else None
    try:
        return load_spec(args.spec, literal_costs=literal)
    except FileNotFoundError:
        raise CommandError(INPUT_ERROR, f"no such file: {args.spec}") from None
    except ValidationError as e:
        if e.violations and all(v.code == "singular" for v in e.violations):
            raise CommandError(NUMERIC_ERROR, f"SingularInteraction: {e}") from None
        raise CommandError(INPUT_ERROR, str(e)) from None
    except ParseError as e:
        raise CommandError(INPUT_ERROR, f"ParseError: {e}") from None


def _solve(spec):
    try:
        return solve(spec)
    except MFRouteError as e:
        raise CommandError(NUMERIC_ERROR, f"{type(e).__name__}: {e}") from None


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args):
    spec = _load(args)
    art = _solve(spec)
    res = stationarity_residual(spec, art)
    out = _out(args)
    export.write_artifacts(out / "artifacts.csv", spec, art, res)
    v0 = value_function(art, spec.initial_density, 0)
    print(f"stationarity_residual {res:.3e}")
    for l, v in enumerate(v0):
        print(f"V_team{l} {float(v)!r}")
    return OK


def _snapshots(text, horizon):
    if text is None:
        times = [t for t in DEFAULT_SNAPSHOTS if t <= horizon]
    elif not text.strip():
        times = [0, horizon]
    else:
        try:
            times = sorted({int(x) for x in text.split(",") if x.strip()})
        except ValueError:
            raise CommandError(INPUT_ERROR, f"bad --snapshots value {text!r}") from None
    bad = [t for t in times if not 0 <= t <= horizon]
    if bad:
        raise CommandError(INPUT_ERROR, f"snapshot times {bad} outside 0..{horizon}")
    return times


def cmd_propagate(args):
    spec = _load(args)
    if args.equilibrium == bool(args.policy):
        raise CommandError(INPUT_ERROR, "give exactly one of --policy or --equilibrium")
    if args.equilibrium:
        policy = _solve(spec).policy
    else:
        try:
            policy = export.read_policy(args.policy, spec)
        except (OSError, ValueError) as e:
            raise CommandError(INPUT_ERROR, f"policy file: {e}") from None
    times = _snapshots(args.snapshots, spec.horizon)
    p = propagate(spec, policy).p
    out = _out(args)
    export.write_density(out / "density.csv", spec, p, range(spec.horizon + 1))
    for t in times:
        export.write_density(out / f"density_t{t:03d}.csv", spec, p, [t])
    print(f"wrote {len(times)} snapshots to {out}")
    return OK


def _int_list(text, name):
    try:
        vals = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise CommandError(INPUT_ERROR, f"bad --{name} value {text!r}") from None
    if not vals:
        raise CommandError(INPUT_ERROR, f"empty --{name}")
    return vals


def cmd_simulate(args):
    spec = _load(args)
    ns = _int_list(args.n, "n")
    if args.reps < 1:
        raise CommandError(INPUT_ERROR, "--reps must be at least 1")
    if min(ns) < spec.team_count:
        raise CommandError(INPUT_ERROR, f"--n must be at least the team count {spec.team_count}")
    art = _solve(spec)
    out = _out(args)
    rows = []
    for n in ns:
        rep = estimate_expected_tax(spec, art.policy, n, args.reps, args.seed, workers=args.threads)
        eps, se = estimate_epsilon(spec, n, args.reps, args.seed, policy=art.policy, workers=args.threads)
        rep = dataclasses.replace(rep, epsilon=eps, epsilon_se=se)
        suffix = "" if len(ns) == 1 else f"_n{n}"
        export.write_report(out / f"report{suffix}.csv", spec, rep)
        (out / f"summary{suffix}.txt").write_text(export.summary_block(spec, rep))
        rows.append([n, args.reps, rep.convergence_error, *eps, *se])
        print(f"N={n} max_gap={rep.convergence_error:.4g} epsilon={np.array2string(eps, precision=4)}")
    L = spec.team_count
    cols = ["n", "replications", "convergence_error"]
    cols += [f"epsilon_team{l}" for l in range(L)] + [f"epsilon_se_team{l}" for l in range(L)]
    export.write_csv(out / "sweep.csv", export._header(spec, seed=args.seed), cols, rows)
    return OK


def _interaction_list(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CommandError(INPUT_ERROR, f"interaction list: {e}") from None
    if isinstance(doc, dict):
        doc = doc.get("interactions", [])
    items = []
    for n, entry in enumerate(doc):
        if isinstance(entry, dict):
            items.append((str(entry.get("name", n)), entry.get("A")))
        else:
            items.append((str(n), entry))
    return items


def cmd_sweep(args):
    spec = _load(args)
    items = _interaction_list(args.interaction_list)
    default = str(min(27, spec.horizon))
    times = _snapshots(args.snapshots if args.snapshots is not None else default, spec.horizon)
    L = spec.team_count
    cols = ["name", "interaction", "status"]
    cols += [f"entropy_t{t}_team{l}" for t in times for l in range(L)]
    cols += [f"expected_cost_team{l}" for l in range(L)]
    rows = []
    for name, A in items:
        row = [name, json.dumps(A)]
        try:
            sp = spec.replace(interaction=np.asarray(A, dtype=float))
            bad = validate_spec(sp)
            if bad:
                if all(v.code == "singular" for v in bad):
                    raise SingularInteraction(str(bad[0]))
                raise ValueError(str(bad[0]))
            art = solve(sp)
            p = propagate(sp, art.policy).p
            ent = [spatial_entropy(p[l, t]) for t in times for l in range(L)]
            cost = value_function(art, sp.initial_density, 0)
            rows.append(row + ["ok", *ent, *cost])
        except (MFRouteError, ValueError, TypeError) as e:
            rows.append(row + [f"failed: {type(e).__name__}"] + [""] * (len(cols) - 3))
    out = _out(args)
    export.write_csv(out / "sweep.csv", export._header(spec), cols, rows)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return OK


def build_parser():
    p = argparse.ArgumentParser(prog="mfroute", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--spec", required=True, help="game-spec or grid-scenario JSON file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--literal-costs", action="store_true", help="grid files: keep penalised moves")

    s = sub.add_parser("solve", help="compute the equilibrium and export artifacts")
    common(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("propagate", help="write density snapshots")
    common(s)
    s.add_argument("--policy", help="policy CSV (team,t,node,successor,Q)")
    s.add_argument("--equilibrium", action="store_true", help="use the solved equilibrium policy")
    s.add_argument("--snapshots", help="comma-separated times; empty string means 0 and T")
    s.set_defaults(func=cmd_propagate)

    s = sub.add_parser("simulate", help="finite-population Monte Carlo report")
    common(s)
    s.add_argument("--n", required=True, help="total drivers; comma-separated for a sweep")
    s.add_argument("--reps", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=None, help="overrides MFR_THREADS")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="entropy and cost for a list of interaction matrices")
    common(s)
    s.add_argument("--interaction-list", required=True, help="JSON list of matrices")
    s.add_argument("--snapshots", help="entropy times (default 27, or T if shorter)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
