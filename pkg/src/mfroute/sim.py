"""Monte Carlo simulation of the finite-population routing game.

Random streams: replication ``r`` of stream ``s`` under root seed ``seed``
draws from ``numpy.random.default_rng([seed, s, r])``.  Replications are
evaluated independently (optionally on a thread pool capped by the
``MFR_THREADS`` environment variable) and reduced in replication order, so
results never depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import best_response_dp, propagate, propagate_policy
from .model import GameSpec, PolicyProfile
from .solver import mean_field_tax, solve

TAX_STREAM = 1
EPSILON_STREAM = 2


def team_sizes(n_total: int, ratios) -> np.ndarray:
    """Largest-remainder split of ``n_total`` drivers by ``ratios``."""
    ratios = np.asarray(ratios, dtype=float)
    raw = n_total * ratios
    base = np.floor(raw).astype(int)
    short = n_total - base.sum()
    # stable sort keeps lower team indices first on equal remainders
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def worker_count(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("MFR_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _rng(seed, stream, rep):
    return np.random.default_rng([int(seed), stream, rep])


@dataclass(frozen=True)
class PopulationCounts:
    k_node: np.ndarray  # [L, T+1, V]
    k_edge: np.ndarray  # [L, T, V, K]

    @property
    def team_sizes(self) -> np.ndarray:
        return self.k_node[:, 0].sum(axis=-1)


def _row_probs(q, mask):
    p = np.clip(np.where(mask, q, 0.0), 0.0, None)
    return p / p.sum(axis=-1, keepdims=True)


def sample_counts(spec: GameSpec, q, sizes, rng: np.random.Generator) -> PopulationCounts:
    """Draw node/edge counts for independent drivers.

    Each driver's start node and every routing choice are independent draws, so
    the per-node choice counts are multinomial given the node occupancy.
    """
    g = spec.graph
    mask = g.mask
    L, T = spec.team_count, spec.horizon
    V, K = mask.shape
    succ = g.succ
    k_node = np.zeros((L, T + 1, V), dtype=np.int64)
    k_edge = np.zeros((L, T, V, K), dtype=np.int64)
    probs = _row_probs(q, mask)
    p0 = np.clip(spec.initial_density, 0.0, None)
    p0 = p0 / p0.sum(axis=-1, keepdims=True)
    for l in range(L):
        k_node[l, 0] = rng.multinomial(int(sizes[l]), p0[l])
        for t in range(T):
            e = rng.multinomial(k_node[l, t], probs[l, t])
            k_edge[l, t] = e
            k_node[l, t + 1] = np.bincount(succ.ravel(), weights=e.ravel(), minlength=V).astype(np.int64)
    return PopulationCounts(k_node, k_edge)


def simulate(spec: GameSpec, policy: PolicyProfile, n_total: int, seed: int) -> PopulationCounts:
    sizes = team_sizes(n_total, spec.population_ratios)
    return sample_counts(spec, policy.q, sizes, np.random.default_rng(int(seed)))


def _team_log_ratio(spec, k_edge, k_node):
    """``log(K_ij / K_i) - log R_ij`` per team, NaN where ``K_i == 0``.

    ``-inf`` where the node is occupied but nobody picks the edge.
    """
    mask = spec.graph.mask
    ki = k_node[..., None].astype(float)
    kij = k_edge.astype(float)
    logR = np.log(np.where(mask, spec.reference_policy, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(kij) - np.log(ki) - logR
    out = np.where(ki > 0, out, np.nan)
    return np.where(mask, out, np.nan)


def _combine(A, logratio):
    """Weight per-team log ratios by the interaction matrix.

    Absent teams (NaN) contribute nothing; an occupied node with an unused
    edge makes the whole charge ``-inf`` whenever its weight is positive.
    """
    lr = np.where(np.isnan(logratio), 0.0, logratio)
    neg = np.isneginf(lr)
    finite = np.where(neg, 0.0, lr)
    out = np.einsum("lm,m...->l...", A, finite)
    any_neg = np.einsum("lm,m...->l...", (A > 0).astype(float), neg.astype(float)) > 0
    return np.where(any_neg, -np.inf, out)


def empirical_tax(spec: GameSpec, counts: PopulationCounts) -> np.ndarray:
    """Realised log-population charge ``pi[l, t, i, k]`` for a driver on each edge.

    Team terms at empty nodes vanish (``log(0/0) = 0``); padding is 0.
    """
    lr = _team_log_ratio(spec, counts.k_edge, counts.k_node[:, :-1])
    pi = _combine(spec.interaction, lr)
    return np.where(spec.graph.mask, pi, 0.0)


@dataclass(frozen=True)
class SimulationReport:
    n_total: int
    replications: int
    seed: int
    support_threshold: float
    empirical_tax: np.ndarray  # Pi-hat [L, T, V, K], NaN where no driver took the edge
    limit_tax: np.ndarray
    support: np.ndarray  # cells entering the convergence error
    convergence_error: float
    excluded_fraction: np.ndarray  # share of replications dropped for -inf charges
    epsilon: np.ndarray | None = None
    epsilon_se: np.ndarray | None = None


def estimate_expected_tax(
    spec: GameSpec,
    policy: PolicyProfile,
    n_total: int,
    replications: int,
    seed: int,
    support_threshold: float = 0.05,
    workers=None,
) -> SimulationReport:
    """Monte Carlo estimate of the expected charge given the driver's own edge.

    In every replication the charge on ``(i, j)`` is shared by all team-``l``
    drivers who took it, so the conditional mean is the driver-weighted
    average ``sum_r K_r pi_r / sum_r K_r``.  Replications where the charge is
    ``-inf`` (another team left the edge unused) are dropped per cell and
    their share is reported.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    sizes = team_sizes(n_total, spec.population_ratios)
    q = policy.q

    def one(r):
        c = sample_counts(spec, q, sizes, _rng(seed, TAX_STREAM, r))
        return c.k_edge, empirical_tax(spec, c)

    num = np.zeros(q.shape)
    den = np.zeros(q.shape)
    dropped = np.zeros(q.shape)
    hit = np.zeros(q.shape)
    for kij, pi in _map(one, range(replications), worker_count(workers)):
        w = kij.astype(float)
        took = w > 0
        bad = took & np.isneginf(pi)
        ok = took & ~bad
        num += np.where(ok, w * np.where(ok, pi, 0.0), 0.0)
        den += np.where(ok, w, 0.0)
        dropped += bad
        hit += took

    with np.errstate(invalid="ignore", divide="ignore"):
        pihat = np.where(den > 0, num / den, np.nan)
        excluded = np.where(hit > 0, dropped / hit, 0.0)
    limit = mean_field_tax(spec, policy).tau
    P = propagate(spec, policy).p[:, :-1]
    flow = P[..., None] * q
    support = (flow.min(axis=0) > support_threshold)[None] & spec.graph.mask
    support = np.broadcast_to(support, q.shape) & (den > 0)
    gap = np.abs(pihat - limit)
    err = float(np.max(np.where(support, gap, 0.0))) if np.any(support) else 0.0
    return SimulationReport(
        n_total=int(n_total),
        replications=int(replications),
        seed=int(seed),
        support_threshold=float(support_threshold),
        empirical_tax=pihat,
        limit_tax=limit,
        support=support,
        convergence_error=err,
        excluded_fraction=excluded,
    )


def tagged_tax_samples(spec: GameSpec, q, team: int, others, rng):
    """Charge a hypothetical extra team-``team`` driver would pay on each edge.

    ``others`` are the team sizes excluding her; her own presence enters her
    team's node and edge counts (self-inclusive counts).  Returns the raw
    charge and a diagnostic variant where unused edges of occupied nodes of
    the other teams are floored at one driver.
    """
    c = sample_counts(spec, q, others, rng)
    kn = c.k_node[:, :-1].copy()
    ke = c.k_edge.copy()
    floored = np.where(kn[..., None] > 0, np.maximum(ke, 1), ke)
    kn[team] += 1
    ke[team] += 1
    floored[team] = ke[team]
    mask = spec.graph.mask
    raw = _combine(spec.interaction, _team_log_ratio(spec, ke, kn))[team]
    low = _combine(spec.interaction, _team_log_ratio(spec, floored, kn))[team]
    return np.where(mask, raw, 0.0), np.where(mask, low, 0.0)


def estimate_epsilon(
    spec: GameSpec,
    n_total: int,
    replications: int,
    seed: int,
    policy: PolicyProfile | None = None,
    workers=None,
):
    """Estimate each team's gain from a single deviation against the equilibrium.

    Everybody else plays the equilibrium policy; one tagged driver per team
    best-responds to the empirical expected charge.  Returns ``(eps, se)``
    arrays, one entry per team.
    """
    if policy is None:
        policy = solve(spec).policy
    q = policy.q
    L = spec.team_count
    sizes = team_sizes(n_total, spec.population_ratios)
    g = spec.graph
    mask = g.mask
    nw = worker_count(workers)
    eps = np.zeros(L)
    se = np.zeros(L)
    for l in range(L):
        if sizes[l] < 1:
            continue
        others = sizes.copy()
        others[l] -= 1

        def one(r, l=l, others=others):
            return tagged_tax_samples(spec, q, l, others, _rng(seed, EPSILON_STREAM * 1000 + l, r))

        pairs = _map(one, range(replications), nw)
        samples = np.stack([p[0] for p in pairs])
        bad = np.isneginf(samples)
        nbad = bad.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            pihat = np.where(bad, 0.0, samples).sum(axis=0) / (replications - nbad)
        # cells with no finite sample at all fall back to unit-floored counts
        floor = np.stack([p[1] for p in pairs]).mean(axis=0)
        pihat = np.where(nbad < replications, pihat, floor)
        pihat = np.where(mask, pihat, 0.0)
        samples = np.where(bad, pihat[None], samples)

        cost = spec.travel_cost[l]
        p0 = spec.initial_density[l]
        br = best_response_dp(g, cost, pihat, p0)
        f_eq = propagate_policy(g, p0, q[l])[:-1, :, None] * q[l]
        f_br = propagate_policy(g, p0, br.policy)[:-1, :, None] * br.policy
        diff = f_eq - f_br
        base = np.sum(diff * cost)
        per_rep = base + np.einsum("tik,rtik->r", diff, samples)
        eps[l] = max(0.0, float(per_rep.mean()))
        se[l] = float(per_rep.std(ddof=1) / np.sqrt(replications)) if replications > 1 else np.inf
    return eps, se
