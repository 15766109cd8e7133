"""Thompson-sampling agents for multi-task Gaussian bandits.

Every agent follows the same round protocol: ``act(tasks)`` returns one action
index per task using beliefs frozen at the start of the round, then
``update(observations)`` folds in ``(task, action_index, reward)`` triples.
"""

from __future__ import annotations

import itertools
from math import comb
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import linalg

from hierbandits.envsched import ActionSet, ModelConfig, UnknownTask
from hierbandits.gausscore import cholesky_factor, symmetrize
from hierbandits.posterior import (
    GaussianPrior,
    HyperPosterior,
    TaskStats,
    hyper_from_terms,
    hyper_posterior_karmed,
    task_conditional_karmed,
    update_task_stats,
)

Observation = tuple[int, int, float]


class BasisDoesNotSpan(ValueError):
    pass


def _is_isotropic(S: np.ndarray) -> bool:
    return bool(np.allclose(S, S[0, 0] * np.eye(S.shape[0]), rtol=0, atol=1e-15 * abs(S[0, 0])))


def _greedy_argmax(actions: np.ndarray, theta: np.ndarray) -> int:
    # np.argmax returns the first maximizer, i.e. the lowest index on ties
    return int(np.argmax(actions @ theta))


class _TaskAgent:
    name = "agent"

    def __init__(self, actions: ActionSet, m: int, sigma: float, rng: np.random.Generator):
        self.actions = actions
        self.m = m
        self.sigma = float(sigma)
        self.rng = rng
        self.stats = [TaskStats.empty(actions.d) for _ in range(m)]

    @property
    def d(self) -> int:
        return self.actions.d

    def _check(self, s: int):
        if not 0 <= s < self.m:
            raise UnknownTask(s)

    def update(self, observations: Iterable[Observation]):
        touched = set()
        for s, a, y in observations:
            self._check(s)
            self.stats[s] = update_task_stats(self.stats[s], self.actions.vectors[a], y, self.sigma)
            touched.add(s)
        if touched:
            self._refresh(sorted(touched))

    def _refresh(self, tasks: Sequence[int]):
        raise NotImplementedError

    def sample_parameters(self, tasks: Sequence[int], rng=None) -> np.ndarray:
        raise NotImplementedError

    def act(self, tasks: Sequence[int]) -> list[int]:
        tasks = list(tasks)
        if not tasks:
            return []
        thetas = self.sample_parameters(tasks)
        return [_greedy_argmax(self.actions.vectors, th) for th in thetas]


class HierTS(_TaskAgent):
    """Hierarchical Thompson sampling with exact Gaussian posteriors.

    One hyper-parameter draw ``mu_t ~ Q_t`` is shared by every task acting in
    a round; each task then samples ``theta`` from its conditional given
    ``mu_t``. When the action set is the standard basis and both prior
    covariances are isotropic, the per-arm (diagonal) formulas are used.
    """

    name = "HierTS"

    def __init__(self, mu_q, Sigma_q, Sigma_0, sigma: float, m: int, actions: ActionSet,
                 rng: np.random.Generator, karmed: Optional[bool] = None):
        super().__init__(actions, m, sigma, rng)
        self.prior = GaussianPrior(mu_q, Sigma_q, Sigma_0)
        if karmed is None:
            karmed = (actions.standard_basis and _is_isotropic(self.prior.Sigma_q)
                      and _is_isotropic(self.prior.Sigma_0))
        self.karmed = karmed
        d = self.d
        self._P = np.zeros((m, d, d))
        self._b = np.zeros((m, d))
        # theta | mu, H_s  =  W_s mu + c_s + C_s z
        self._W = np.tile(_solve_cond_gain(self.prior.Sigma_0_inv, np.zeros((d, d))), (m, 1, 1))
        self._c = np.zeros((m, d))
        self._C = np.tile(cholesky_factor(self.prior.Sigma_0), (m, 1, 1))
        self._refresh_hyper()

    @classmethod
    def from_config(cls, cfg: ModelConfig, actions: ActionSet, rng, **kw) -> "HierTS":
        return cls(cfg.mu_q, cfg.Sigma_q, cfg.Sigma_0, cfg.sigma, cfg.m, actions, rng, **kw)

    def _refresh(self, tasks):
        S0i = self.prior.Sigma_0_inv
        for s in tasks:
            st = self.stats[s]
            if self.karmed:
                s0 = np.sqrt(self.prior.Sigma_0[0, 0])
                cond = task_conditional_karmed(np.zeros(self.d), s0, self.sigma, st)
                var = np.diag(cond.cov)
                self._W[s] = np.diag(var / s0**2)
                self._c[s] = cond.mean
                self._C[s] = np.diag(np.sqrt(var))
            else:
                d = self.d
                Lm = cholesky_factor(S0i + st.G)
                sol = linalg.cho_solve((Lm, True), np.column_stack([st.G, S0i, st.B]), check_finite=False)
                # hyper-precision term S0^{-1} M^{-1} G, see posterior.task_contribution
                self._P[s] = symmetrize(S0i @ sol[:, :d])
                self._b[s] = S0i @ sol[:, -1]
                self._W[s] = sol[:, d:2 * d]
                self._c[s] = sol[:, -1]
                self._C[s] = _inverse_root(Lm)
        self._refresh_hyper()

    def _refresh_hyper(self):
        if self.karmed:
            sq = np.sqrt(self.prior.Sigma_q[0, 0])
            s0 = np.sqrt(self.prior.Sigma_0[0, 0])
            self.hyper = hyper_posterior_karmed(self.prior.mu_q, sq, s0, self.sigma, self.stats)
        else:
            self.hyper = hyper_from_terms(self.prior, self.prior.Sigma_q_inv + self._P.sum(axis=0),
                                          self.prior.prior_term + self._b.sum(axis=0))
        self._hyper_chol = cholesky_factor(self.hyper.cov)

    def sample_hyper(self, rng=None) -> np.ndarray:
        rng = self.rng if rng is None else rng
        return self.hyper.mean + self._hyper_chol @ rng.standard_normal(self.d)

    def sample_parameters(self, tasks, rng=None) -> np.ndarray:
        rng = self.rng if rng is None else rng
        mu_t = self.sample_hyper(rng)
        out = np.empty((len(tasks), self.d))
        for i, s in enumerate(tasks):
            self._check(s)
            out[i] = self._W[s] @ mu_t + self._c[s] + self._C[s] @ rng.standard_normal(self.d)
        return out


def _inverse_root(L: np.ndarray) -> np.ndarray:
    """``L^{-T}`` for a Cholesky factor ``L`` of a precision ``M``; ``L^{-T} L^{-1} = M^{-1}``."""
    return linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False).T


def _solve_cond_gain(S0i: np.ndarray, G: np.ndarray) -> np.ndarray:
    Lm = cholesky_factor(S0i + G)
    return linalg.cho_solve((Lm, True), S0i, check_finite=False)


class TaskPriorTS(_TaskAgent):
    """Independent per-task linear TS with a fixed Gaussian prior.

    With prior ``N(mu_*, Sigma_0)`` this is OracleTS; with
    ``N(mu_q, Sigma_q + Sigma_0)`` it is the marginal-prior TS baseline.
    Task ``s``'s belief depends on task ``s``'s statistics only.
    """

    def __init__(self, prior_mean, prior_cov, sigma: float, m: int, actions: ActionSet,
                 rng: np.random.Generator, name: str = "TS"):
        super().__init__(actions, m, sigma, rng)
        self.name = name
        self.prior_mean = np.asarray(prior_mean, dtype=float)
        self.prior_cov = symmetrize(np.asarray(prior_cov, dtype=float))
        self._prior_prec = symmetrize(linalg.cho_solve((cholesky_factor(self.prior_cov), True),
                                                       np.eye(self.d)))
        self._prior_term = self._prior_prec @ self.prior_mean
        self._mean = np.tile(self.prior_mean, (m, 1))
        self._C = np.tile(cholesky_factor(self.prior_cov), (m, 1, 1))

    def posterior(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of task ``s``'s current belief."""
        return self._mean[s], self._C[s] @ self._C[s].T

    def _refresh(self, tasks):
        for s in tasks:
            st = self.stats[s]
            Lm = cholesky_factor(self._prior_prec + st.G)
            self._mean[s] = linalg.cho_solve((Lm, True), self._prior_term + st.B, check_finite=False)
            self._C[s] = _inverse_root(Lm)

    def sample_parameters(self, tasks, rng=None) -> np.ndarray:
        rng = self.rng if rng is None else rng
        out = np.empty((len(tasks), self.d))
        for i, s in enumerate(tasks):
            self._check(s)
            out[i] = self._mean[s] + self._C[s] @ rng.standard_normal(self.d)
        return out


def oracle_ts(mu_star, cfg: ModelConfig, actions: ActionSet, rng) -> TaskPriorTS:
    return TaskPriorTS(mu_star, cfg.Sigma_0, cfg.sigma, cfg.m, actions, rng, name="OracleTS")


def marginal_ts(cfg: ModelConfig, actions: ActionSet, rng) -> TaskPriorTS:
    return TaskPriorTS(cfg.mu_q, cfg.Sigma_q + cfg.Sigma_0, cfg.sigma, cfg.m, actions, rng,
                       name="MarginalTS")


def exploration_eta(vectors: np.ndarray) -> float:
    """``lambda_min(sum_i a_i a_i^T)`` for the rows ``a_i`` of ``vectors``."""
    return float(np.linalg.eigvalsh(vectors.T @ vectors)[0])


def select_exploration_basis(actions: ActionSet, max_combinations: int = 20000) -> list[int]:
    """Pick ``d`` action indices whose outer-product sum has the largest smallest eigenvalue.

    Exhaustive when there are at most ``max_combinations`` subsets, greedy otherwise.
    """
    V, d = actions.vectors, actions.d
    if actions.K < d:
        raise BasisDoesNotSpan(f"{actions.K} actions cannot span R^{d}")
    if comb(actions.K, d) <= max_combinations:
        best = max(itertools.combinations(range(actions.K), d), key=lambda c: exploration_eta(V[list(c)]))
        return list(best)
    chosen: list[int] = []
    for k in range(1, d + 1):
        rest = [i for i in range(actions.K) if i not in chosen]
        # k-th largest eigenvalue of the partial Gram matrix
        chosen.append(max(rest, key=lambda i: np.linalg.eigvalsh(V[chosen + [i]].T @ V[chosen + [i]])[-k]))
    return sorted(chosen)


class ForcedExploration:
    """Plays a fixed spanning basis for each task's first ``d`` interactions, then defers.

    The wrapped agent still sees every observation, forced or not.
    """

    def __init__(self, inner: _TaskAgent, basis: Sequence[int]):
        basis = [int(i) for i in basis]
        self.inner = inner
        self.basis = basis
        self.eta = exploration_eta(inner.actions.vectors[basis]) if basis else 0.0
        if len(basis) != inner.d or self.eta <= 1e-10:
            raise BasisDoesNotSpan(f"basis {basis} gives lambda_min = {self.eta:.3g}")
        self.plays = np.zeros(inner.m, dtype=int)

    @property
    def name(self) -> str:
        return self.inner.name

    @property
    def stats(self):
        return self.inner.stats

    def explored(self, s: int) -> bool:
        return self.plays[s] >= len(self.basis)

    def act(self, tasks: Sequence[int]) -> list[int]:
        tasks = list(tasks)
        free = [s for s in tasks if self.explored(s)]
        chosen = dict(zip(free, self.inner.act(free)))
        return [chosen[s] if s in chosen else self.basis[self.plays[s]] for s in tasks]

    def update(self, observations: Iterable[Observation]):
        observations = list(observations)
        self.inner.update(observations)
        for s, _, _ in observations:
            self.plays[s] += 1
