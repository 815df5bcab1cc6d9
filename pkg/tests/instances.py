import numpy as np

from mfroute.model import GameSpec, TrafficGraph, uniform_reference


def random_graph(rng, V, self_loops=True):
    succ = []
    for i in range(V):
        others = [j for j in range(V) if j != i]
        k = rng.integers(0 if self_loops else 1, len(others) + 1)
        pick = sorted(rng.choice(others, size=k, replace=False).tolist())
        if self_loops:
            pick = [i] + pick
        succ.append(pick)
    return TrafficGraph(V, succ)


def random_interaction(rng, L):
    A = rng.uniform(0.1, 1.0, size=(L, L))
    A[np.diag_indices(L)] = rng.uniform(2.0, 4.0, size=L) + (L - 1)
    return A


def random_spec(rng, V=3, L=2, T=2, graph=None, integer_costs=False):
    graph = graph or random_graph(rng, V)
    V, K = graph.mask.shape
    if integer_costs:
        C = rng.integers(0, 4, size=(L, T, V, K)).astype(float)
    else:
        C = rng.uniform(0.0, 5.0, size=(L, T, V, K))
    C = C * graph.mask
    P0 = rng.dirichlet(np.ones(V), size=L)
    R = rng.uniform(0.5, 1.5, size=(T, V, K)) * graph.mask
    R = R / R.sum(axis=-1, keepdims=True)
    return GameSpec(
        graph=graph,
        horizon=T,
        travel_cost=C,
        reference_policy=R,
        interaction=random_interaction(rng, L),
        initial_density=P0,
        population_ratios=rng.dirichlet(np.ones(L) * 5),
    )


LINE3 = TrafficGraph(3, [[0, 1], [0, 1, 2], [1, 2]])


def single_node_spec(L=1, T=3, cost=2.0, a=2.0):
    g = TrafficGraph(1, [[0]])
    A = np.full((L, L), 0.5) + np.eye(L) * a
    return GameSpec(
        graph=g,
        horizon=T,
        travel_cost=np.full((L, T, 1, 1), cost),
        reference_policy=uniform_reference(g, T),
        interaction=A,
        initial_density=np.ones((L, 1)),
    )
