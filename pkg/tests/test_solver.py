import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfroute import (
    NonFiniteIntermediate,
    PolicyProfile,
    SingularInteraction,
    SupportViolation,
    evaluate_cost,
    mean_field_tax,
    solve,
    stationarity_residual,
    value_function,
)
from mfroute.model import GameSpec, TrafficGraph
from mfroute.scenarios import STRONG_INTERACTION, WEAK_INTERACTION, build_grid_spec, default_grid, line3_spec

import oracles
from instances import LINE3, random_spec, single_node_spec


def max_gap(ragged_a, q, graph):
    worst = 0.0
    for l, per_t in enumerate(ragged_a):
        for t, per_i in enumerate(per_t):
            for i, row in enumerate(per_i):
                worst = max(worst, np.abs(row - q[l, t, i, : len(row)]).max())
    return worst


def test_single_node_policy_is_one():
    art = solve(single_node_spec(L=2, T=4))
    np.testing.assert_array_equal(art.q, np.ones((2, 4, 1, 1)))


def test_single_team_row_constant_costs_reproduce_reference():
    rng = np.random.default_rng(3)
    spec = random_spec(rng, V=4, L=1, T=1)
    C = np.broadcast_to(rng.uniform(0, 5, size=(1, 1, 4, 1)), spec.travel_cost.shape) * spec.graph.mask
    art = solve(spec.replace(travel_cost=C))
    np.testing.assert_allclose(art.q[0], spec.reference_policy, atol=1e-15)


def test_stage_only_costs_reproduce_reference_over_horizon():
    # cost depending on t alone keeps every continuation value node-independent
    rng = np.random.default_rng(4)
    spec = random_spec(rng, V=5, L=1, T=4)
    C = np.broadcast_to(rng.uniform(0, 5, size=(1, 4, 1, 1)), spec.travel_cost.shape) * spec.graph.mask
    art = solve(spec.replace(travel_cost=C))
    np.testing.assert_allclose(art.q[0], spec.reference_policy, atol=1e-14)


def test_line3_matches_oracles():
    spec = line3_spec()
    succ = spec.graph.successors
    C = oracles.ragged(spec.travel_cost, succ)
    R = oracles.ragged(spec.reference_policy, succ)
    fp = oracles.fixed_point_equilibrium(C, R, succ, spec.interaction)
    pg = oracles.projected_gradient_equilibrium(C, R, succ, spec.interaction)
    q = solve(spec).q
    assert max_gap(fp, q, spec.graph) < 1e-4
    assert max_gap(pg, q, spec.graph) < 1e-4
    # the two oracles agree with each other as well
    assert max_gap(fp, np.array([[[np.pad(r, (0, 3 - len(r))) for r in t] for t in l] for l in pg]), spec.graph) < 1e-6


@pytest.mark.parametrize("seed", range(6))
def test_randomised_instances_match_fixed_point_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    T = int(rng.integers(2, 4))
    spec = random_spec(rng, L=2, T=T, graph=LINE3, integer_costs=True)
    succ = spec.graph.successors
    fp = oracles.fixed_point_equilibrium(
        oracles.ragged(spec.travel_cost, succ), oracles.ragged(spec.reference_policy, succ), succ, spec.interaction
    )
    assert max_gap(fp, solve(spec).q, spec.graph) < 1e-4


def test_single_team_reduction_matches_direct_recursion():
    rng = np.random.default_rng(11)
    for _ in range(5):
        spec = random_spec(rng, V=5, L=1, T=4)
        succ = spec.graph.successors
        direct = oracles.single_team_policy(
            oracles.ragged(spec.travel_cost[0], succ),
            oracles.ragged(spec.reference_policy, succ),
            succ,
            spec.interaction[0, 0],
        )
        assert max_gap([direct], solve(spec).q, spec.graph) < 1e-12


@st.composite
def specs(draw, max_L=3):
    seed = draw(st.integers(0, 2**32 - 1))
    V = draw(st.integers(3, 6))
    L = draw(st.integers(1, max_L))
    T = draw(st.integers(2, 3))
    return random_spec(np.random.default_rng(seed), V=V, L=L, T=T)


@settings(max_examples=40, deadline=None)
@given(spec=specs())
def test_solver_properties(spec):
    art = solve(spec)
    mask = spec.graph.mask
    rows = np.where(mask, art.q, 0).sum(axis=-1)
    assert np.abs(rows - 1).max() < 1e-9
    assert np.all(art.q[:, :, mask] > 0)
    assert np.all(art.q[:, :, ~mask] == 0)
    assert stationarity_residual(spec, art) < 1e-8


@settings(max_examples=25, deadline=None)
@given(spec=specs(), c=st.floats(0.05, 20.0))
def test_scale_covariance(spec, c):
    base = solve(spec).q
    scaled = solve(spec.replace(interaction=c * spec.interaction, travel_cost=c * spec.travel_cost)).q
    np.testing.assert_allclose(scaled, base, atol=1e-9, rtol=0)


def test_value_function_terminal_and_point_mass():
    spec = line3_spec()
    art = solve(spec)
    np.testing.assert_array_equal(value_function(art, np.full(3, 1 / 3), spec.horizon), [0.0, 0.0])
    for i in range(3):
        v = value_function(art, np.eye(3)[i], 1)
        np.testing.assert_allclose(v, -np.diag(spec.interaction) - art.lam[:, 1, i], rtol=0, atol=1e-15)
    with pytest.raises(IndexError):
        value_function(art, np.eye(3)[0], 3)
    with pytest.raises(IndexError):
        value_function(art, np.eye(3)[0], -1)


def test_value_function_equals_equilibrium_cost():
    spec = line3_spec()
    art = solve(spec)
    cost = evaluate_cost(spec, art.policy, mean_field_tax(spec, art.policy))
    np.testing.assert_allclose(cost.total, value_function(art, spec.initial_density, 0), rtol=0, atol=1e-9)


def test_residual_flags_perturbed_policy():
    spec = line3_spec()
    art = solve(spec)
    clean = stationarity_residual(spec, art)
    q = art.q.copy()
    q[0, 1, 1, 0] += 0.01
    q[0, 1, 1, :3] /= q[0, 1, 1, :3].sum()
    bumped = type(art)(PolicyProfile(q), art.lam, art.phi, art.m, art.big_lambda, art.value_coeff)
    dirty = stationarity_residual(spec, bumped)
    assert clean < 1e-12
    assert dirty > 1e-4
    assert dirty > 1e6 * max(clean, 1e-16)


def test_residual_single_node_is_zero():
    spec = single_node_spec(L=1, T=3, cost=7.0, a=2.5)
    art = solve(spec)
    np.testing.assert_allclose(art.lam[0, :, 0], -spec.interaction[0, 0] - art.phi[0, :, 0, 0], atol=1e-14)
    assert stationarity_residual(spec, art) == 0.0


def test_mean_field_tax_zero_under_reference():
    spec = line3_spec()
    R = PolicyProfile(np.broadcast_to(spec.reference_policy, (2,) + spec.reference_policy.shape))
    np.testing.assert_array_equal(mean_field_tax(spec, R).tau, 0.0)


def test_mean_field_tax_single_row():
    g = TrafficGraph(2, [[0, 1], [1]])
    spec = GameSpec(
        graph=g,
        horizon=1,
        travel_cost=np.zeros((1, 1, 2, 2)),
        reference_policy=np.array([[[0.5, 0.5], [1.0, 0.0]]]),
        interaction=np.array([[2.0]]),
        initial_density=np.array([[1.0, 0.0]]),
    )
    q = np.array([[[[0.8, 0.2], [1.0, 0.0]]]])
    tau = mean_field_tax(spec, PolicyProfile(q)).tau
    np.testing.assert_allclose(tau[0, 0, 0], [0.9400072584914713, -1.83258146374831], rtol=1e-14)
    assert tau[0, 0, 1, 0] == 0.0


def test_mean_field_tax_sentinel_and_support():
    spec = line3_spec()
    q = solve(spec).q.copy()
    q[1, 0, 1] = [0.5, 0.5, 0.0]
    tau = mean_field_tax(spec, PolicyProfile(q)).tau
    assert np.isneginf(tau[:, 0, 1, 2]).all()
    assert np.isfinite(tau[:, 0, 1, :2]).all()
    q[1, 0, 0] = [0.5, 0.25, 0.25]  # third slot is padding for node 0
    with pytest.raises(SupportViolation):
        mean_field_tax(spec, PolicyProfile(q))


@pytest.mark.parametrize("A", [STRONG_INTERACTION, WEAK_INTERACTION])
def test_grid_tax_finite_on_support(A):
    spec, _ = build_grid_spec(default_grid(), 50, A)
    art = solve(spec)
    tau = mean_field_tax(spec, art.policy).tau
    assert np.isfinite(tau[:, :, spec.graph.mask]).all()
    assert stationarity_residual(spec, art) < 1e-8


def test_literal_grid_solves_with_small_interaction():
    spec, _ = build_grid_spec(default_grid(), 50, WEAK_INTERACTION, literal_costs=True)
    art = solve(spec)
    rows = np.where(spec.graph.mask, art.q, 0).sum(-1)
    assert np.abs(rows - 1).max() < 1e-9
    assert stationarity_residual(spec, art) < 1e-8


def test_singular_interaction_raises():
    with pytest.raises(SingularInteraction):
        solve(line3_spec(A=np.ones((2, 2))))


def test_overflow_reported():
    spec = line3_spec(A=WEAK_INTERACTION)
    with pytest.raises(NonFiniteIntermediate) as e:
        solve(spec.replace(travel_cost=np.full(spec.travel_cost.shape, 1e308)))
    assert e.value.indices


def test_solver_is_fast_and_deterministic():
    spec, _ = build_grid_spec(default_grid(), 50, STRONG_INTERACTION)
    t0 = time.perf_counter()
    a = solve(spec)
    assert time.perf_counter() - t0 < 1.0
    b = solve(spec)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.lam, b.lam)
