"""Density propagation, cost evaluation and best responses under a fixed tax."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .model import DensityTrajectory, GameSpec, InfiniteCost, PolicyProfile, TaxField, TrafficGraph
from .solver import mean_field_tax

REACH_EPS = 1e-12


def _scatter(graph: TrafficGraph):
    """Sparse ``[V*K, V]`` map sending slot mass to the successor node."""
    V, K = graph.mask.shape
    rows = np.flatnonzero(graph.mask.ravel())
    cols = graph.succ.ravel()[rows]
    return sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(V * K, V))


def propagate_policy(graph: TrafficGraph, p0, q) -> np.ndarray:
    """Forward-propagate ``p0[..., V]`` under ``q[..., T, V, K]``.

    Returns ``[..., T+1, V]``.
    """
    p0 = np.asarray(p0, dtype=float)
    q = np.where(graph.mask, np.asarray(q, dtype=float), 0.0)
    T = q.shape[-3]
    V, K = graph.mask.shape
    S = _scatter(graph)
    lead = p0.shape[:-1]
    out = np.empty(lead + (T + 1, V))
    out[..., 0, :] = p0
    p = p0.reshape(-1, V)
    qf = q.reshape((-1, T, V, K))
    for t in range(T):
        flow = (p[:, :, None] * qf[:, t]).reshape(p.shape[0], V * K)
        p = np.asarray(S.T @ flow.T).T
        out[..., t + 1, :] = p.reshape(lead + (V,))
    return out


def propagate(spec: GameSpec, policy: PolicyProfile) -> DensityTrajectory:
    return DensityTrajectory(propagate_policy(spec.graph, spec.initial_density, policy.q))


@dataclass(frozen=True)
class CostReport:
    total: np.ndarray
    per_stage: np.ndarray
    travel_part: np.ndarray
    tax_part: np.ndarray


def _flows(spec, q, p0=None):
    p0 = spec.initial_density if p0 is None else p0
    P = propagate_policy(spec.graph, p0, q)
    mask = spec.graph.mask
    return P[..., :-1, :, None] * np.where(mask, q, 0.0)


def stage_costs(spec: GameSpec, flows, cost, tau):
    """Split ``sum flows * (cost + tau)`` per stage, with ``0 * -inf = 0``."""
    used = flows > 0
    sentinel = used & ~np.isfinite(tau)
    if np.any(sentinel):
        idx = tuple(int(v) for v in np.argwhere(sentinel)[0])
        raise InfiniteCost(f"used edge {idx} carries an undefined (-inf) charge")
    travel = np.sum(np.where(used, flows * cost, 0.0), axis=(-2, -1))
    tax = np.sum(np.where(used, flows * np.where(used, tau, 0.0), 0.0), axis=(-2, -1))
    return travel, tax


def evaluate_cost(spec: GameSpec, policy: PolicyProfile, tax: TaxField) -> CostReport:
    """Expected travel plus tax cost of each team under a fixed tax field."""
    flows = _flows(spec, policy.q)
    travel, taxp = stage_costs(spec, flows, spec.travel_cost, tax.tau)
    per_stage = travel + taxp
    return CostReport(total=per_stage.sum(axis=-1), per_stage=per_stage, travel_part=travel, tax_part=taxp)


class BestResponse(NamedTuple):
    policy: np.ndarray  # [T, V, K] one-hot
    value: float
    stage_values: np.ndarray  # [T+1, V]
    action_costs: np.ndarray  # [T, V, K], +inf on padding / sentinel edges


def best_response_dp(graph: TrafficGraph, cost, tau, p0) -> BestResponse:
    """Deterministic backward DP for one team; ``cost`` and ``tau`` are ``[T, V, K]``."""
    mask = graph.mask
    succ = graph.succ
    T = cost.shape[0]
    V, K = mask.shape
    v = np.zeros((T + 1, V))
    act = np.empty((T, V, K))
    pol = np.zeros((T, V, K))
    live = mask & np.isfinite(tau)
    for t in range(T - 1, -1, -1):
        c = np.where(live[t], cost[t] + np.where(live[t], tau[t], 0.0) + v[t + 1][succ], np.inf)
        act[t] = c
        k = np.argmin(c, axis=-1)
        pol[t, np.arange(V), k] = 1.0
        v[t] = c[np.arange(V), k]
    p0 = np.asarray(p0, dtype=float)
    value = float(np.sum(np.where(p0 > 0, p0 * v[0], 0.0)))
    return BestResponse(pol, value, v, act)


def best_response(spec: GameSpec, team: int, tax: TaxField) -> BestResponse:
    """Pure best response of ``team`` to a fixed tax (ties go to the lowest slot)."""
    return best_response_dp(spec.graph, spec.travel_cost[team], tax.tau[team], spec.initial_density[team])


def exploitability(spec: GameSpec, policy: PolicyProfile) -> np.ndarray:
    """Per-team gain of a best-responding driver against ``policy``'s own tax."""
    tax = mean_field_tax(spec, policy)
    J = evaluate_cost(spec, policy, tax).total
    br = np.array([best_response(spec, l, tax).value for l in range(spec.team_count)])
    return np.maximum(J - br, 0.0)


def tie_spread(spec: GameSpec, tax: TaxField, density: DensityTrajectory) -> np.ndarray:
    """Max minus min best-response action cost at every reachable state.

    Returns ``[L, T, V]``, NaN where the state is not reached.
    """
    L, T = spec.team_count, spec.horizon
    out = np.full((L, T, spec.node_count), np.nan)
    mask = spec.graph.mask
    for l in range(L):
        act = best_response(spec, l, tax).action_costs
        hi = np.max(np.where(mask, act, -np.inf), axis=-1)
        lo = np.min(np.where(mask, act, np.inf), axis=-1)
        reach = density.p[l, :T] > REACH_EPS
        out[l] = np.where(reach, hi - lo, np.nan)
    return out


def spatial_entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=-1)


def random_policy(spec: GameSpec, rng: np.random.Generator, teams: int | None = None) -> PolicyProfile:
    """Flat-Dirichlet rows over each node's successors."""
    L = spec.team_count if teams is None else teams
    mask = spec.graph.mask
    g = rng.standard_gamma(1.0, size=(L, spec.horizon) + mask.shape) * mask
    return PolicyProfile(g / g.sum(axis=-1, keepdims=True))
