"""Game instances, policy/density containers and their validation.

All team-indexed tensors share the layout ``[team, time, node, slot]`` where
``slot`` is the position of a successor inside the node's ordered successor
list.  Nodes with fewer successors than the widest node are padded; the
padding is ignored everywhere through :attr:`TrafficGraph.mask`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-9
NONNEG_TOL = 1e-12
COND_LIMIT = 1e12


class MFRouteError(Exception):
    """Base class for errors raised by this package."""


class SingularInteraction(MFRouteError):
    pass


class NonFiniteIntermediate(MFRouteError):
    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices


class SupportViolation(MFRouteError):
    pass


class InfiniteCost(MFRouteError):
    pass


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TrafficGraph:
    """Directed graph given by ordered successor lists (self-loops allowed)."""

    node_count: int
    successors: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "successors", tuple(tuple(int(j) for j in s) for s in self.successors)
        )

    @cached_property
    def degree(self) -> np.ndarray:
        return _frozen([len(s) for s in self.successors], dtype=int)

    @property
    def max_degree(self) -> int:
        return int(self.degree.max()) if self.node_count else 0

    @cached_property
    def succ(self) -> np.ndarray:
        """``[V, K]`` successor node ids; padded slots point back at the node."""
        out = np.empty((self.node_count, max(self.max_degree, 1)), dtype=int)
        for i, s in enumerate(self.successors):
            out[i, :] = i
            out[i, : len(s)] = s
        out.setflags(write=False)
        return out

    @cached_property
    def mask(self) -> np.ndarray:
        k = np.arange(max(self.max_degree, 1))
        m = k[None, :] < self.degree[:, None]
        m.setflags(write=False)
        return m

    def slot(self, i: int, j: int) -> int:
        return self.successors[i].index(j)

    def violations(self) -> list[Violation]:
        out = []
        if self.node_count < 1:
            out.append(Violation("graph", (), "node_count must be positive"))
        if len(self.successors) != self.node_count:
            out.append(
                Violation("graph", (), f"{len(self.successors)} successor lists for {self.node_count} nodes")
            )
        for i, s in enumerate(self.successors):
            if not s:
                out.append(Violation("graph", (i,), "node has no successors"))
            if len(set(s)) != len(s):
                out.append(Violation("graph", (i,), "duplicate successors"))
            bad = [j for j in s if not 0 <= j < self.node_count]
            if bad:
                out.append(Violation("graph", (i,), f"invalid successor ids {bad}"))
        return out

    def __eq__(self, other):
        return (
            isinstance(other, TrafficGraph)
            and self.node_count == other.node_count
            and self.successors == other.successors
        )

    def __hash__(self):
        return hash((self.node_count, self.successors))


@dataclass(frozen=True)
class Violation:
    tensor: str
    index: tuple
    message: str
    code: str = "invalid"

    def __str__(self):
        where = f"[{', '.join(map(str, self.index))}]" if self.index else ""
        return f"{self.tensor}{where}: {self.message}"


@dataclass(frozen=True, eq=False)
class GameSpec:
    """A full multi-team routing game.

    ``travel_cost`` is ``[L, T, V, K]`` and ``reference_policy`` ``[T, V, K]``,
    both laid out along the graph's successor slots.  ``interaction`` is the
    L x L tax weighting matrix, ``initial_density`` is ``[L, V]``.
    """

    graph: TrafficGraph
    horizon: int
    travel_cost: np.ndarray
    reference_policy: np.ndarray
    interaction: np.ndarray
    initial_density: np.ndarray
    population_ratios: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "interaction", _frozen(np.atleast_2d(self.interaction)))
        ratios = self.population_ratios
        if ratios is None:
            n = self.interaction.shape[0]
            ratios = np.full(n, 1.0 / n)
        for name in ("travel_cost", "reference_policy", "initial_density"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "population_ratios", _frozen(ratios))

    @property
    def team_count(self) -> int:
        return self.interaction.shape[0]

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    def replace(self, **changes) -> GameSpec:
        kw = {
            name: getattr(self, name)
            for name in (
                "graph",
                "horizon",
                "travel_cost",
                "reference_policy",
                "interaction",
                "initial_density",
                "population_ratios",
            )
        }
        kw.update(changes)
        return GameSpec(**kw)

    def to_dict(self) -> dict:
        g = self.graph
        deg = g.degree

        def ragged(arr):
            # [..., V, K] -> nested lists trimmed to each node's degree
            if arr.ndim == 2:
                return [arr[i, : deg[i]].tolist() for i in range(g.node_count)]
            return [ragged(a) for a in arr]

        return {
            "nodes": g.node_count,
            "successors": [list(s) for s in g.successors],
            "horizon": self.horizon,
            "teams": self.team_count,
            "travel_cost": ragged(self.travel_cost),
            "reference_policy": ragged(self.reference_policy),
            "interaction": self.interaction.tolist(),
            "initial_density": self.initial_density.tolist(),
            "population_ratios": self.population_ratios.tolist(),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, GameSpec):
            return NotImplemented
        return self.graph == other.graph and self.horizon == other.horizon and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in (
                "travel_cost",
                "reference_policy",
                "interaction",
                "initial_density",
                "population_ratios",
            )
        )


@dataclass(frozen=True)
class PolicyProfile:
    """Per-team routing policies ``q[l, t, i, k]``."""

    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q))

    @property
    def team_count(self) -> int:
        return self.q.shape[0]

    def violations(self, graph: TrafficGraph, reference=None) -> list[Violation]:
        return check_stochastic(self.q, graph, "Q", reference=reference)


@dataclass(frozen=True)
class DensityTrajectory:
    """Per-team node distributions ``p[l, t, i]`` for ``t = 0..T``."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p))

    def at(self, t: int) -> np.ndarray:
        return self.p[:, t, :]


@dataclass(frozen=True)
class TaxField:
    """Per-edge congestion charge ``tau[l, t, i, k]``.

    ``-inf`` marks edges some team never uses; padded slots hold 0.
    """

    tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", _frozen(self.tau))


@dataclass(frozen=True)
class SolverArtifacts:
    policy: PolicyProfile
    lam: np.ndarray
    phi: np.ndarray
    m: np.ndarray
    big_lambda: np.ndarray
    value_coeff: np.ndarray

    def __post_init__(self):
        for name in ("lam", "phi", "m", "big_lambda", "value_coeff"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def q(self) -> np.ndarray:
        return self.policy.q

    @property
    def horizon(self) -> int:
        return self.lam.shape[1]


def check_stochastic(q, graph: TrafficGraph, name: str, reference=None) -> list[Violation]:
    """Row-stochasticity and support checks for a ``[..., V, K]`` tensor."""
    q = np.asarray(q, dtype=float)
    out = []
    mask = graph.mask
    if q.shape[-2:] != mask.shape:
        return [Violation(name, (), f"shape {q.shape} does not end with {mask.shape}")]
    lead = q.shape[:-2]
    if not np.all(np.isfinite(q)):
        for idx in zip(*np.nonzero(~np.isfinite(q))):
            out.append(Violation(name, tuple(int(x) for x in idx), "non-finite entry"))
        return out
    neg = (q < -NONNEG_TOL) & mask
    for idx in zip(*np.nonzero(neg)):
        out.append(Violation(name, tuple(int(x) for x in idx), "negative probability"))
    pad = (np.abs(q) > 0) & ~mask
    for idx in zip(*np.nonzero(pad)):
        out.append(Violation(name, tuple(int(x) for x in idx), "mass outside successor list"))
    sums = np.where(mask, q, 0.0).sum(axis=-1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    for idx in zip(*np.nonzero(bad)):
        out.append(
            Violation(name, tuple(int(x) for x in idx), f"row sums to {sums[idx]:.12g}", code="row_sum")
        )
    if reference is not None:
        ref = np.broadcast_to(np.asarray(reference, dtype=float), lead + mask.shape)
        off = (q > 0) & (ref <= 0) & mask
        for idx in zip(*np.nonzero(off)):
            out.append(Violation(name, tuple(int(x) for x in idx), "support outside reference policy"))
    return out


def validate_spec(spec: GameSpec) -> list[Violation]:
    """List every invariant violation of ``spec``; empty means valid.

    Never raises for array-valued fields of finite reals, whatever their shape.
    """
    out = []
    g = spec.graph
    gv = g.violations()
    out.extend(gv)
    if gv:
        return out
    if spec.horizon < 1:
        out.append(Violation("horizon", (), "must be positive"))
        return out
    T, V, K = spec.horizon, g.node_count, g.max_degree
    mask = g.mask

    A = spec.interaction
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        out.append(Violation("A", (), f"interaction must be square, got shape {A.shape}", code="shape"))
        return out
    L = A.shape[0]
    if not np.all(np.isfinite(A)):
        out.append(Violation("A", (), "non-finite entries"))
    else:
        for idx in zip(*np.nonzero(A <= 0)):
            out.append(Violation("A", tuple(int(x) for x in idx), "entries must be positive"))
        cond = np.linalg.cond(A) if L > 0 else np.inf
        if not np.isfinite(cond) or cond > COND_LIMIT:
            out.append(Violation("A", (), f"A singular (condition number {cond:.3g})", code="singular"))

    C = spec.travel_cost
    if C.shape != (L, T, V, K):
        out.append(Violation("C", (), f"shape {C.shape}, expected {(L, T, V, K)}", code="shape"))
    else:
        cm = np.where(mask, C, 0.0)
        for idx in zip(*np.nonzero(~np.isfinite(cm))):
            out.append(Violation("C", tuple(int(x) for x in idx), "non-finite cost"))
        for idx in zip(*np.nonzero(np.isfinite(cm) & (cm < 0))):
            out.append(Violation("C", tuple(int(x) for x in idx), "negative cost"))

    R = spec.reference_policy
    if R.shape != (T, V, K):
        out.append(Violation("R", (), f"shape {R.shape}, expected {(T, V, K)}", code="shape"))
    else:
        rv = check_stochastic(R, g, "R")
        out.extend(rv)
        if np.all(np.isfinite(R)):
            for idx in zip(*np.nonzero((R <= 0) & mask)):
                out.append(Violation("R", tuple(int(x) for x in idx), "must be strictly positive on successors"))

    P0 = spec.initial_density
    if P0.shape != (L, V):
        out.append(Violation("P0", (), f"shape {P0.shape}, expected {(L, V)}", code="shape"))
    elif not np.all(np.isfinite(P0)):
        out.append(Violation("P0", (), "non-finite entries"))
    else:
        for l in range(L):
            if np.any(P0[l] < -NONNEG_TOL):
                out.append(Violation("P0", (l,), "negative probability"))
            s = P0[l].sum()
            if abs(s - 1.0) > ROW_SUM_TOL:
                out.append(Violation("P0", (l,), f"sums to {s:.12g}", code="row_sum"))

    w = spec.population_ratios
    if w.shape != (L,):
        out.append(Violation("population_ratios", (), f"shape {w.shape}, expected {(L,)}", code="shape"))
    elif not np.all(np.isfinite(w)) or np.any(w <= 0) or abs(w.sum() - 1.0) > ROW_SUM_TOL:
        out.append(Violation("population_ratios", (), "must be positive and sum to 1"))
    return out


def uniform_reference(graph: TrafficGraph, horizon: int) -> np.ndarray:
    r = np.where(graph.mask, 1.0 / graph.degree[:, None], 0.0)
    return np.broadcast_to(r, (horizon,) + r.shape).copy()


def point_mass(node_count: int, i: int) -> np.ndarray:
    p = np.zeros(node_count)
    p[i] = 1.0
    return p


def padded(rows: Sequence[Sequence[float]], graph: TrafficGraph) -> np.ndarray:
    """Pack per-node ragged rows into a ``[V, K]`` array."""
    out = np.zeros(graph.mask.shape)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out
