"""CSV exports with provenance headers.

Every file starts with ``# key=value`` comment lines (tool version, spec hash,
seed and any extra fields) followed by a regular CSV table.  Read them back
with ``pandas.read_csv(path, comment="#")`` or :func:`read_csv`.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .model import GameSpec, PolicyProfile, SolverArtifacts, check_stochastic

TOOL = "mfroute"
VERSION = "0.1.0"


def _header(spec: GameSpec | None, seed=None, **extra):
    head = {"tool": f"{TOOL} {VERSION}", "spec": spec.digest() if spec is not None else "none"}
    head["seed"] = "none" if seed is None else str(seed)
    head.update({k: str(v) for k, v in extra.items()})
    return head


def write_csv(path, header: dict, columns, rows):
    path = Path(path)
    with path.open("w", newline="") as f:
        for k, v in header.items():
            f.write(f"# {k}={v}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return path


def read_csv(path):
    """Return ``(header, rows)`` where rows are dicts of strings."""
    header = {}
    lines = []
    with Path(path).open() as f:
        for line in f:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                header[k.strip()] = v
            else:
                lines.append(line)
    return header, list(csv.DictReader(lines))


def _edges(spec):
    g = spec.graph
    for i, s in enumerate(g.successors):
        for k, j in enumerate(s):
            yield i, k, j


def write_artifacts(path, spec: GameSpec, art: SolverArtifacts, residual: float):
    L, T = spec.team_count, spec.horizon
    edges = list(_edges(spec))
    rows = (
        (l, t, i, j, art.q[l, t, i, k], art.lam[l, t, i], art.phi[l, t, i, k], art.m[l, t, i, k])
        for l in range(L)
        for t in range(T)
        for i, k, j in edges
    )
    head = _header(spec, row_sum_tol=1e-9, support_eps=1e-12, stationarity_residual=repr(float(residual)))
    return write_csv(path, head, ["team", "t", "node", "successor", "Q", "lambda", "phi", "M"], rows)


def read_policy(path, spec: GameSpec) -> PolicyProfile:
    """Load a ``team, t, node, successor, Q`` table into a policy profile.

    Raises ``ValueError`` when rows are missing, unknown or not stochastic.
    """
    _, rows = read_csv(path)
    g = spec.graph
    q = np.zeros((spec.team_count, spec.horizon) + g.mask.shape)
    seen = np.zeros(q.shape, dtype=bool)
    for n, r in enumerate(rows):
        try:
            l, t, i, j = (int(r[c]) for c in ("team", "t", "node", "successor"))
            k = g.slot(i, j)
            q[l, t, i, k] = float(r["Q"])
            seen[l, t, i, k] = True
        except (KeyError, ValueError, IndexError, TypeError) as e:
            raise ValueError(f"policy row {n + 1}: {e!r}") from None
    missing = g.mask & ~seen
    if np.any(missing):
        raise ValueError(f"policy file misses {int(missing.sum())} entries")
    bad = check_stochastic(q, g, "Q", reference=spec.reference_policy)
    if bad:
        raise ValueError(f"policy is not stochastic: {bad[0]}")
    return PolicyProfile(q)


def write_density(path, spec: GameSpec, p, times):
    rows = ((l, t, i, p[l, t, i]) for t in times for l in range(p.shape[0]) for i in range(p.shape[2]))
    return write_csv(path, _header(spec), ["team", "t", "node", "probability"], rows)


def write_report(path, spec: GameSpec, report):
    L, T = spec.team_count, spec.horizon
    rows = (
        (
            l,
            t,
            i,
            j,
            report.empirical_tax[l, t, i, k],
            report.limit_tax[l, t, i, k],
            int(report.support[l, t, i, k]),
            report.excluded_fraction[l, t, i, k],
        )
        for l in range(L)
        for t in range(T)
        for i, k, j in _edges(spec)
    )
    head = _header(
        spec,
        seed=report.seed,
        n=report.n_total,
        replications=report.replications,
        support_threshold=report.support_threshold,
    )
    cols = ["team", "t", "node", "successor", "empirical_tax", "limit_tax", "in_support", "excluded_fraction"]
    return write_csv(path, head, cols, rows)


def summary_block(spec: GameSpec, report) -> str:
    lines = [
        f"tool: {TOOL} {VERSION}",
        f"spec: {spec.digest()}",
        f"seed: {report.seed}",
        f"N: {report.n_total}",
        f"replications: {report.replications}",
        f"support_threshold: {report.support_threshold}",
        f"max_gap: {float(report.convergence_error)!r}",
    ]
    if report.epsilon is not None:
        for l, (e, s) in enumerate(zip(report.epsilon, report.epsilon_se)):
            lines.append(f"epsilon_team{l}: {float(e)!r} (se {float(s)!r})")
    return "\n".join(lines) + "\n"
