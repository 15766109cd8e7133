"""Exact Gaussian beliefs for the hierarchical linear and K-armed bandit.

Notation follows the model ``mu_* ~ N(mu_q, Sigma_q)``,
``theta_s | mu_* ~ N(mu_*, Sigma_0)``, ``Y ~ N(a^T theta_s, sigma^2)``.
Per task, ``G = sigma^-2 sum a a^T`` and ``B = sigma^-2 sum a y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from hierbandits.gausscore import cholesky_factor, pd_inverse, symmetrize


@dataclass(frozen=True)
class TaskStats:
    """Sufficient statistics of one task's history.

    ``arm_counts``/``arm_sums`` hold the K-armed view (raw pull counts and
    reward sums per coordinate). They stay meaningful only while every action
    taken is a standard basis vector; ``karmed`` records whether that holds.
    """

    G: np.ndarray
    B: np.ndarray
    arm_counts: np.ndarray
    arm_sums: np.ndarray
    count: int = 0
    karmed: bool = True

    @classmethod
    def empty(cls, d: int) -> "TaskStats":
        return cls(np.zeros((d, d)), np.zeros(d), np.zeros(d, dtype=np.int64), np.zeros(d))

    @property
    def d(self) -> int:
        return self.B.shape[0]


def _basis_index(a: np.ndarray) -> Optional[int]:
    nz = np.flatnonzero(a)
    if nz.size == 1 and a[nz[0]] == 1.0:
        return int(nz[0])
    return None


def update_task_stats(stats: TaskStats, action, reward: float, sigma: float) -> TaskStats:
    a = np.asarray(action, dtype=float)
    prec = sigma**-2
    G = stats.G + prec * np.outer(a, a)
    B = stats.B + prec * reward * a
    counts, sums, karmed = stats.arm_counts, stats.arm_sums, stats.karmed
    i = _basis_index(a)
    if i is None:
        karmed = False
    else:
        counts = counts.copy()
        sums = sums.copy()
        counts[i] += 1
        sums[i] += reward
    return TaskStats(G, B, counts, sums, stats.count + 1, karmed)


@dataclass(frozen=True)
class HyperPosterior:
    """``N(mean, cov)`` over the hyper-parameter; ``precision`` is ``cov^{-1}``."""

    mean: np.ndarray
    cov: np.ndarray
    precision: np.ndarray


@dataclass(frozen=True)
class TaskConditional:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class MarginalPosterior:
    mean: np.ndarray
    cov: np.ndarray


class GaussianPrior:
    """Cached factorizations of ``Sigma_q`` and ``Sigma_0`` shared by the posterior routines."""

    def __init__(self, mu_q, Sigma_q, Sigma_0):
        self.mu_q = np.asarray(mu_q, dtype=float)
        self.Sigma_q = symmetrize(np.asarray(Sigma_q, dtype=float))
        self.Sigma_0 = symmetrize(np.asarray(Sigma_0, dtype=float))
        self.Sigma_q_inv = pd_inverse(self.Sigma_q)
        self.Sigma_0_inv = pd_inverse(self.Sigma_0)
        self.prior_term = self.Sigma_q_inv @ self.mu_q

    @property
    def d(self) -> int:
        return self.mu_q.shape[0]


def task_contribution(Sigma_0_inv: np.ndarray, stats: TaskStats) -> tuple[np.ndarray, np.ndarray]:
    """Precision and linear term one task adds to the hyper-posterior.

    Uses ``G - G M^{-1} G = Sigma_0^{-1} M^{-1} G`` and
    ``B - G M^{-1} B = Sigma_0^{-1} M^{-1} B`` with ``M = Sigma_0^{-1} + G``,
    which is cancellation-free and total for singular or zero ``G``.
    """
    d = stats.d
    if stats.count == 0:
        return np.zeros((d, d)), np.zeros(d)
    Lm = cholesky_factor(Sigma_0_inv + stats.G)
    sol = linalg.cho_solve((Lm, True), np.column_stack([stats.G, stats.B]), check_finite=False)
    P = symmetrize(Sigma_0_inv @ sol[:, :d])
    return P, Sigma_0_inv @ sol[:, d]


def hyper_from_terms(prior: GaussianPrior, precision: np.ndarray, linear: np.ndarray) -> HyperPosterior:
    precision = symmetrize(precision)
    L = cholesky_factor(precision)
    mean = linalg.cho_solve((L, True), linear, check_finite=False)
    cov = symmetrize(linalg.cho_solve((L, True), np.eye(prior.d), check_finite=False))
    return HyperPosterior(mean=mean, cov=cov, precision=precision)


def hyper_posterior_linear(mu_q, Sigma_q, Sigma_0, stats: Sequence[TaskStats],
                           prior: Optional[GaussianPrior] = None) -> HyperPosterior:
    """Hyper-posterior of ``mu_*`` given every task's statistics (G form)."""
    prior = prior or GaussianPrior(mu_q, Sigma_q, Sigma_0)
    precision = prior.Sigma_q_inv.copy()
    linear = prior.prior_term.copy()
    for st in stats:
        P, b = task_contribution(prior.Sigma_0_inv, st)
        precision += P
        linear += b
    return hyper_from_terms(prior, precision, linear)


def hyper_posterior_karmed(mu_q, sigma_q: float, sigma_0: float, sigma: float,
                           stats: Sequence[TaskStats]) -> HyperPosterior:
    """Diagonal hyper-posterior of the K-armed model, arm by arm."""
    mu_q = np.asarray(mu_q, dtype=float)
    precision = np.full(mu_q.shape, sigma_q**-2)
    linear = mu_q / sigma_q**2
    for st in stats:
        if not st.karmed:
            raise ValueError("task history contains non-basis actions")
        denom = st.arm_counts * sigma_0**2 + sigma**2
        precision = precision + st.arm_counts / denom
        # N/(N s0^2 + s^2) * B/N, written without the 0/0 at N = 0
        linear = linear + st.arm_sums / denom
    var = 1.0 / precision
    return HyperPosterior(mean=var * linear, cov=np.diag(var), precision=np.diag(precision))


def task_conditional_linear(mu_t, Sigma_0, stats: TaskStats,
                            Sigma_0_inv: Optional[np.ndarray] = None) -> TaskConditional:
    """Belief over ``theta_s`` given ``mu_* = mu_t`` and task ``s``'s history."""
    if Sigma_0_inv is None:
        Sigma_0_inv = pd_inverse(Sigma_0)
    Lm = cholesky_factor(Sigma_0_inv + stats.G)
    mean = linalg.cho_solve((Lm, True), Sigma_0_inv @ np.asarray(mu_t, dtype=float) + stats.B,
                            check_finite=False)
    cov = symmetrize(linalg.cho_solve((Lm, True), np.eye(stats.d), check_finite=False))
    return TaskConditional(mean=mean, cov=cov)


def task_conditional_karmed(mu_t, sigma_0: float, sigma: float, stats: TaskStats) -> TaskConditional:
    if not stats.karmed:
        raise ValueError("task history contains non-basis actions")
    var = 1.0 / (sigma_0**-2 + stats.arm_counts / sigma**2)
    mean = var * (np.asarray(mu_t, dtype=float) / sigma_0**2 + stats.arm_sums / sigma**2)
    return TaskConditional(mean=mean, cov=np.diag(var))


def marginal_posterior(hyper: HyperPosterior, Sigma_0, stats: TaskStats,
                       Sigma_0_inv: Optional[np.ndarray] = None) -> MarginalPosterior:
    """Belief over ``theta_s`` given all history, via the total covariance split.

    ``cov = M^{-1} + M^{-1} S0^{-1} Sbar S0^{-1} M^{-1}`` and
    ``mean = M^{-1} (S0^{-1} mubar + B)`` with ``M = S0^{-1} + G``.
    """
    if Sigma_0_inv is None:
        Sigma_0_inv = pd_inverse(Sigma_0)
    d = stats.d
    Lm = cholesky_factor(Sigma_0_inv + stats.G)
    rhs = np.column_stack([np.eye(d), Sigma_0_inv, Sigma_0_inv @ hyper.mean + stats.B])
    sol = linalg.cho_solve((Lm, True), rhs, check_finite=False)
    M_inv, W = sol[:, :d], sol[:, d:2 * d]  # W = M^{-1} S0^{-1}
    cov = symmetrize(symmetrize(M_inv) + W @ hyper.cov @ W.T)
    return MarginalPosterior(mean=sol[:, 2 * d], cov=cov)


def telescoping_increment(Sigma_0, stats_before: TaskStats, action, sigma: float,
                          Sigma_0_inv: Optional[np.ndarray] = None) -> np.ndarray:
    """Rank-one growth of the hyper-precision when one task takes ``action``.

    Returns ``sigma^-2 S0^{-1} M^{-1} a a^T M^{-1} S0^{-1} / (1 + sigma^-2 a^T M^{-1} a)``.
    """
    if Sigma_0_inv is None:
        Sigma_0_inv = pd_inverse(Sigma_0)
    a = np.asarray(action, dtype=float)
    Lm = cholesky_factor(Sigma_0_inv + stats_before.G)
    u = linalg.cho_solve((Lm, True), a, check_finite=False)
    w = Sigma_0_inv @ u
    return np.outer(w, w) / (sigma**2 * (1.0 + a @ u / sigma**2))


def total_covariance_terms(hyper: HyperPosterior, Sigma_0_inv: np.ndarray,
                           stats: TaskStats) -> tuple[np.ndarray, np.ndarray]:
    """The two summands of the marginal covariance: task term and hyper term."""
    d = stats.d
    Lm = cholesky_factor(Sigma_0_inv + stats.G)
    sol = linalg.cho_solve((Lm, True), np.column_stack([np.eye(d), Sigma_0_inv]), check_finite=False)
    M_inv, W = symmetrize(sol[:, :d]), sol[:, d:]
    return M_inv, symmetrize(W @ hyper.cov @ W.T)


def sigma_max_sq(Sigma_q, Sigma_0) -> float:
    """Uniform cap on the top eigenvalue of every marginal posterior covariance."""
    w0 = np.linalg.eigvalsh(symmetrize(Sigma_0))
    lq = np.linalg.eigvalsh(symmetrize(Sigma_q))[-1]
    return float(w0[-1] + w0[-1] ** 2 * lq / w0[0] ** 2)
