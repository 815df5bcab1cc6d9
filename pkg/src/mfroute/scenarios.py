"""Instance builders and the JSON game/grid file formats.

Game-spec document (all tensors per node are ragged, one entry per successor):

``nodes``            int
``successors``       list of lists of node ids
``horizon``          int
``teams``            int
``travel_cost``      nested ``[team][t][node][slot]`` lists, or
                     ``{"default": c, "overrides": [{"team", "t", "node", "to", "value"}]}``
                     where a missing or null ``team``/``t`` applies to all of them
``reference_policy`` ``"uniform"`` or nested ``[t][node][slot]``
``interaction``      L x L list
``initial_density``  ``[team][node]``
``population_ratios`` ``[team]`` (optional, default uniform)

Grid scenario document: ``width``, ``height``, ``obstacles`` (list of
``[x, y]``), ``teams`` (list of ``{"origin": [x, y], "destination": [x, y]}``),
``horizon``, ``interaction`` and optional ``literal_costs``,
``penalty_cost``, ``step_cost``, ``terminal_weight``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    GameSpec,
    MFRouteError,
    TrafficGraph,
    point_mass,
    uniform_reference,
    validate_spec,
)


class ParseError(MFRouteError):
    pass


class ValidationError(MFRouteError):
    def __init__(self, violations):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"invalid game spec: {shown}{more}")


class InvalidGrid(MFRouteError):
    pass


# stay, north, east, south, west
MOVES = ((0, 0), (0, 1), (1, 0), (0, -1), (-1, 0))


def manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class GridWorld:
    width: int
    height: int
    origins: tuple
    destinations: tuple
    obstacles: frozenset = field(default_factory=frozenset)
    penalty_cost: float = 100000.0
    step_cost: float = 1.0
    terminal_weight: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", frozenset(tuple(map(int, c)) for c in self.obstacles))
        object.__setattr__(self, "origins", tuple(tuple(map(int, c)) for c in self.origins))
        object.__setattr__(self, "destinations", tuple(tuple(map(int, c)) for c in self.destinations))

    def on_board(self, c) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def check(self):
        if self.width < 1 or self.height < 1:
            raise InvalidGrid("grid dimensions must be positive")
        if len(self.origins) != len(self.destinations) or not self.origins:
            raise InvalidGrid("need one origin and one destination per team")
        for c in self.origins + self.destinations:
            if not self.on_board(c):
                raise InvalidGrid(f"cell {c} is off the board")
            if c in self.obstacles:
                raise InvalidGrid(f"cell {c} is an obstacle")


def build_grid_spec(grid: GridWorld, horizon: int, interaction, literal_costs: bool = False):
    """Grid-world routing game with a terminal distance penalty.

    Moving to an adjacent free cell costs ``step_cost``; staying is free.  At
    the last stage every move additionally pays ``terminal_weight *
    sqrt(manhattan(j, destination))``.  By default, moves into obstacles or off
    the board are removed from the action set.  With ``literal_costs`` every
    cell keeps the full stay/N/E/S/W action set: obstacle cells become nodes
    and all off-board moves lead to one absorbing sink, and entering either
    costs ``penalty_cost``.

    Returns ``(spec, cells)`` where ``cells[node]`` is the ``(x, y)`` of the
    node, or ``None`` for the sink.
    """
    grid.check()
    A = np.atleast_2d(np.asarray(interaction, dtype=float))
    L = len(grid.origins)
    if A.shape != (L, L):
        raise InvalidGrid(f"interaction shape {A.shape} does not match {L} teams")
    T = int(horizon)
    cells = [
        (x, y)
        for y in range(grid.height)
        for x in range(grid.width)
        if literal_costs or (x, y) not in grid.obstacles
    ]
    if literal_costs:
        cells.append(None)
    index = {c: n for n, c in enumerate(cells)}
    sink = index.get(None)

    successors = []
    for c in cells:
        if c is None:
            successors.append([sink])
            continue
        s = []
        for dx, dy in MOVES:
            j = (c[0] + dx, c[1] + dy)
            if grid.on_board(j):
                if literal_costs or j not in grid.obstacles:
                    s.append(index[j])
            elif literal_costs and sink not in s:
                s.append(sink)
        successors.append(s)
    graph = TrafficGraph(len(cells), successors)
    V, K = graph.mask.shape

    blocked = np.array([c is None or c in grid.obstacles for c in cells])
    C = np.zeros((L, T, V, K))
    for i, s in enumerate(successors):
        for k, j in enumerate(s):
            if blocked[j]:
                base = grid.penalty_cost
            elif j == i:
                base = 0.0
            else:
                base = grid.step_cost
            C[:, :, i, k] = base
            for l in range(L):
                if cells[j] is not None:
                    C[l, T - 1, i, k] += grid.terminal_weight * np.sqrt(manhattan(cells[j], grid.destinations[l]))
    P0 = np.stack([point_mass(V, index[o]) for o in grid.origins])
    spec = GameSpec(
        graph=graph,
        horizon=T,
        travel_cost=C,
        reference_policy=uniform_reference(graph, T),
        interaction=A,
        initial_density=P0,
        population_ratios=np.full(L, 1.0 / L),
    )
    return spec, cells


def default_grid() -> GridWorld:
    """A 10 x 10 board with two wall segments; teams cross diagonally."""
    walls = {(3, y) for y in range(2, 8)} | {(6, y) for y in range(3, 10)}
    return GridWorld(
        width=10,
        height=10,
        origins=((0, 0), (9, 0)),
        destinations=((9, 9), (0, 9)),
        obstacles=frozenset(walls),
    )


STRONG_INTERACTION = np.array([[3.0, 2.0], [2.0, 3.0]])
WEAK_INTERACTION = np.array([[0.06, 0.04], [0.04, 0.06]])


def line3_spec(A=STRONG_INTERACTION, horizon: int = 2) -> GameSpec:
    """Three-node line 0 - 1 - 2 with self-loops, two teams heading to opposite ends."""
    graph = TrafficGraph(3, [[0, 1], [0, 1, 2], [1, 2]])
    V, K = graph.mask.shape
    A = np.asarray(A, dtype=float)
    L = A.shape[0]
    targets = [2, 0, 1][:L]
    C = np.zeros((L, horizon, V, K))
    for l in range(L):
        for i, s in enumerate(graph.successors):
            for k, j in enumerate(s):
                C[l, :, i, k] = (j != i) * (1 + l)
                C[l, -1, i, k] += abs(j - targets[l])
    return GameSpec(
        graph=graph,
        horizon=horizon,
        travel_cost=C,
        reference_policy=uniform_reference(graph, horizon),
        interaction=A,
        initial_density=np.full((L, V), 1.0 / V),
        population_ratios=np.full(L, 1.0 / L),
    )


def _required(doc, key, path=""):
    if key not in doc:
        raise ParseError(f"{path}missing required field '{key}'")
    return doc[key]


def _expand_costs(doc, graph, L, T):
    tc = _required(doc, "travel_cost")
    V, K = graph.mask.shape
    if isinstance(tc, dict):
        C = np.full((L, T, V, K), float(_required(tc, "default", "travel_cost: ")))
        for n, o in enumerate(tc.get("overrides", [])):
            try:
                i = int(o["node"])
                k = graph.slot(i, int(o["to"]))
                teams = range(L) if o.get("team") is None else [int(o["team"])]
                times = range(T) if o.get("t") is None else [int(o["t"])]
                for l in teams:
                    for t in times:
                        C[l, t, i, k] = float(o["value"])
            except (KeyError, ValueError, IndexError, TypeError) as e:
                raise ParseError(f"travel_cost.overrides[{n}]: {e!r}") from None
        return np.where(graph.mask, C, 0.0)
    return _ragged(tc, (L, T), graph, "travel_cost")


def _ragged(nested, lead, graph, name):
    V, K = graph.mask.shape
    out = np.zeros(lead + (V, K))
    try:
        arr = nested
        for idx in np.ndindex(*lead):
            rows = arr
            for d in idx:
                rows = rows[d]
            if len(rows) != V:
                raise ParseError(f"{name}{list(idx)}: expected {V} node rows, got {len(rows)}")
            for i, r in enumerate(rows):
                if len(r) != graph.degree[i]:
                    raise ParseError(
                        f"{name}{list(idx) + [i]}: expected {graph.degree[i]} entries, got {len(r)}"
                    )
                out[idx + (i, slice(0, len(r)))] = [float(x) for x in r]
    except (TypeError, IndexError, ValueError) as e:
        raise ParseError(f"{name}: malformed nested array ({e})") from None
    return out


def spec_from_dict(doc: dict) -> GameSpec:
    """Build a spec from a parsed document without validating it."""
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    try:
        V = int(_required(doc, "nodes"))
        succ = _required(doc, "successors")
        T = int(_required(doc, "horizon"))
        L = int(_required(doc, "teams"))
        graph = TrafficGraph(V, [list(map(int, s)) for s in succ])
    except (TypeError, ValueError) as e:
        raise ParseError(f"malformed header field: {e}") from None
    gv = graph.violations()
    if gv:
        raise ValidationError(gv)
    C = _expand_costs(doc, graph, L, T)
    ref = _required(doc, "reference_policy")
    if ref == "uniform":
        R = uniform_reference(graph, T)
    elif isinstance(ref, str):
        raise ParseError(f"reference_policy: unknown keyword {ref!r}")
    else:
        R = _ragged(ref, (T,), graph, "reference_policy")
    try:
        A = np.array(_required(doc, "interaction"), dtype=float)
        P0 = np.array(_required(doc, "initial_density"), dtype=float)
        ratios = doc.get("population_ratios")
        ratios = None if ratios is None else np.array(ratios, dtype=float)
    except ValueError as e:
        raise ParseError(f"malformed array: {e}") from None
    if A.ndim != 2:
        A = A.reshape(1, -1) if A.ndim < 2 else A
    return GameSpec(
        graph=graph,
        horizon=T,
        travel_cost=C,
        reference_policy=R,
        interaction=A,
        initial_density=P0,
        population_ratios=ratios if ratios is not None else np.full(max(L, 1), 1.0 / max(L, 1)),
    )


def grid_from_dict(doc: dict):
    try:
        teams = _required(doc, "teams")
        grid = GridWorld(
            width=int(_required(doc, "width")),
            height=int(_required(doc, "height")),
            origins=tuple(_required(t, "origin", "teams: ") for t in teams),
            destinations=tuple(_required(t, "destination", "teams: ") for t in teams),
            obstacles=frozenset(tuple(c) for c in doc.get("obstacles", [])),
            penalty_cost=float(doc.get("penalty_cost", 100000.0)),
            step_cost=float(doc.get("step_cost", 1.0)),
            terminal_weight=float(doc.get("terminal_weight", 10.0)),
        )
        horizon = int(_required(doc, "horizon"))
        A = _required(doc, "interaction")
    except (TypeError, ValueError) as e:
        raise ParseError(f"malformed grid field: {e}") from None
    return grid, horizon, A, bool(doc.get("literal_costs", False))


def _read(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None


def is_grid_document(doc) -> bool:
    return isinstance(doc, dict) and "width" in doc


def load_spec(path, literal_costs: bool | None = None) -> GameSpec:
    """Load and validate a game-spec or grid-scenario file."""
    doc = _read(path)
    if is_grid_document(doc):
        grid, horizon, A, literal = grid_from_dict(doc)
        if literal_costs is not None:
            literal = literal_costs
        try:
            spec, _ = build_grid_spec(grid, horizon, A, literal_costs=literal)
        except InvalidGrid as e:
            raise ParseError(str(e)) from None
    else:
        spec = spec_from_dict(doc)
    violations = validate_spec(spec)
    if violations:
        raise ValidationError(violations)
    return spec


def save_spec(spec: GameSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict()))


def save_grid(grid: GridWorld, horizon: int, interaction, path, literal_costs=False) -> None:
    doc = {
        "width": grid.width,
        "height": grid.height,
        "obstacles": sorted(list(c) for c in grid.obstacles),
        "teams": [{"origin": list(o), "destination": list(d)} for o, d in zip(grid.origins, grid.destinations)],
        "horizon": int(horizon),
        "interaction": np.asarray(interaction, dtype=float).tolist(),
        "literal_costs": bool(literal_costs),
        "penalty_cost": grid.penalty_cost,
        "step_cost": grid.step_cost,
        "terminal_weight": grid.terminal_weight,
    }
    Path(path).write_text(json.dumps(doc, indent=1))
