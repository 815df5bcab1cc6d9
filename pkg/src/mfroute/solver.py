"""Backward linearly-solvable recursion for the mean-field equilibrium."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .model import (
    COND_LIMIT,
    ROW_SUM_TOL,
    GameSpec,
    NonFiniteIntermediate,
    PolicyProfile,
    SingularInteraction,
    SolverArtifacts,
    SupportViolation,
    TaxField,
)

SUPPORT_EPS = 1e-12


def _factor(A):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularInteraction(f"SingularInteraction: condition number of A is {cond:.3g}")
    return linalg.lu_factor(A)


def _lu_apply(lu, x):
    """Solve ``A y = x`` along the leading (team) axis of ``x``."""
    shape = x.shape
    return linalg.lu_solve(lu, x.reshape(shape[0], -1)).reshape(shape)


def _check_finite(name, arr, mask):
    bad = ~np.isfinite(arr) & mask
    if np.any(bad):
        idx = [tuple(int(v) for v in ix) for ix in zip(*np.nonzero(bad))]
        raise NonFiniteIntermediate(f"non-finite {name} at {idx[:5]}", indices=idx)


def solve(spec: GameSpec) -> SolverArtifacts:
    """Compute equilibrium policies, multipliers and cost-to-go coefficients.

    Runs backward from ``t = T-1``; each step is a linear solve against the
    interaction matrix followed by a max-shifted log-sum-exp normalisation.
    """
    A = spec.interaction
    lu = _factor(A)
    g = spec.graph
    L, T = spec.team_count, spec.horizon
    V, K = g.mask.shape
    mask = g.mask
    succ = g.succ
    a_diag = np.diag(A)[:, None, None]
    R = spec.reference_policy
    logR = np.log(np.where(mask, R, 1.0))

    q = np.zeros((L, T, V, K))
    lam = np.zeros((L, T, V))
    big_lam = np.zeros((L, T, V))
    phi = np.zeros((L, T, V, K))
    m_all = np.zeros((L, T, V, K))

    phi[:, T - 1] = spec.travel_cost[:, T - 1]
    for t in range(T - 1, -1, -1):
        M = _lu_apply(lu, -a_diag - phi[:, t])
        M = np.where(mask, M, -np.inf)
        _check_finite("M", M, np.broadcast_to(mask, M.shape))
        top = M.max(axis=-1, keepdims=True)
        lse = top[..., 0] + np.log(np.sum(np.exp(M - top + logR[t]) * mask, axis=-1))
        Lam = A @ lse
        lam_t = Lam
        # A^{-1} Lam is lse exactly; the round trip through A would lose
        # about cond(A) * |Lam| * eps, which breaks row sums at penalty scale
        shift = lse
        qt = np.where(mask, np.exp(M - shift[..., None] + logR[t]), 0.0)
        _check_finite("Q", qt, np.broadcast_to(mask, qt.shape))
        _check_finite("lambda", lam_t, np.ones_like(lam_t, dtype=bool))
        rows = qt.sum(axis=-1)
        if np.max(np.abs(rows - 1.0)) > ROW_SUM_TOL:
            l, i = np.unravel_index(np.argmax(np.abs(rows - 1.0)), rows.shape)
            raise NonFiniteIntermediate(
                f"policy row (team {l}, t {t}, node {i}) sums to {rows[l, i]!r}",
                indices=[(int(l), t, int(i))],
            )
        q[:, t] = qt
        lam[:, t] = lam_t
        big_lam[:, t] = Lam
        m_all[:, t] = np.where(mask, M, 0.0)
        if t > 0:
            phi[:, t - 1] = spec.travel_cost[:, t - 1] - a_diag - lam_t[:, succ]
    phi = np.where(mask, phi, 0.0)
    return SolverArtifacts(
        policy=PolicyProfile(q),
        lam=lam,
        phi=phi,
        m=m_all,
        big_lambda=big_lam,
        value_coeff=-np.diag(A)[:, None, None] - lam,
    )


def value_function(artifacts: SolverArtifacts, density, t: int) -> np.ndarray:
    """Per-team value ``sum_i P[l, i] * (-a_ll - lambda[l, t, i])``.

    ``t == T`` is the terminal stage and returns zeros.
    """
    T = artifacts.horizon
    density = np.asarray(density, dtype=float)
    L = artifacts.value_coeff.shape[0]
    if density.ndim == 1:
        density = np.broadcast_to(density, (L, density.size))
    if t == T:
        return np.zeros(L)
    if not 0 <= t < T:
        raise IndexError(f"time index {t} outside 0..{T}")
    return np.einsum("li,li->l", density, artifacts.value_coeff[:, t])


def _log_ratio(spec: GameSpec, q):
    mask = spec.graph.mask
    R = spec.reference_policy
    with np.errstate(divide="ignore"):
        return np.where(mask, np.log(np.where(mask, q, 1.0)) - np.log(np.where(mask, R, 1.0)), 0.0)


def stationarity_residual(spec: GameSpec, artifacts: SolverArtifacts) -> float:
    """Largest first-order-condition violation over the used support."""
    A = spec.interaction
    q = artifacts.q
    mask = spec.graph.mask
    logr = _log_ratio(spec, q)
    # the identity needs every team's log-ratio, so underflowed cells are skipped
    used = np.all(q > SUPPORT_EPS, axis=0)[None] & mask
    logr = np.where(np.isfinite(logr), logr, 0.0)
    tax = np.einsum("lm,mtik->ltik", A, logr)
    res = artifacts.phi + tax + np.diag(A)[:, None, None, None] + artifacts.lam[..., None]
    res = np.where(used, np.abs(res), 0.0)
    return float(res.max()) if res.size else 0.0


def mean_field_tax(spec: GameSpec, policy: PolicyProfile) -> TaxField:
    """Large-population limit of the log-population charge under ``policy``."""
    mask = spec.graph.mask
    q = policy.q
    R = spec.reference_policy
    if np.any((q > 0) & ((R[None] <= 0) | ~mask)):
        raise SupportViolation("policy puts mass where the reference policy has none")
    logr = _log_ratio(spec, q)
    zero = np.any((q <= 0) & mask, axis=0)
    logr = np.where(np.isfinite(logr), logr, 0.0)
    tau = np.einsum("lm,mtik->ltik", spec.interaction, logr)
    tau = np.where(zero[None], -np.inf, tau)
    return TaxField(np.where(mask, tau, 0.0))
