"""Brute-force check of the closed-form posteriors against joint Gaussian conditioning.

The oracle stacks ``(mu_*, theta_1, ..., theta_m, y_1, ..., y_N)`` into one
Gaussian and conditions on the rewards; it never touches the G/B statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hierbandits.gausscore import JointGaussian, condition_joint_gaussian, sample_mvn, symmetrize
from hierbandits.posterior import (
    TaskStats,
    hyper_posterior_linear,
    marginal_posterior,
    update_task_stats,
)


def hierarchical_joint(mu_q, Sigma_q, Sigma_0, sigma, m, tasks, actions) -> JointGaussian:
    """Joint prior of hyper-parameter, task parameters and the rewards of ``(tasks[j], actions[j])``."""
    mu_q = np.asarray(mu_q, dtype=float)
    d = len(mu_q)
    D = d * (m + 1)
    C = np.tile(Sigma_q, (m + 1, m + 1))
    for s in range(m):
        lo = d * (s + 1)
        C[lo:lo + d, lo:lo + d] += Sigma_0
    N = len(tasks)
    H = np.zeros((N, D))
    for j, (s, a) in enumerate(zip(tasks, actions)):
        H[j, d * (s + 1): d * (s + 2)] = a
    mean = np.concatenate([np.tile(mu_q, m + 1), H @ np.tile(mu_q, m + 1)])
    cov = np.block([[C, C @ H.T], [H @ C, H @ C @ H.T + sigma**2 * np.eye(N)]])
    blocks = {"mu": (0, d)}
    blocks.update({f"theta_{s}": (d * (s + 1), d * (s + 2)) for s in range(m)})
    if N:
        blocks["y"] = (D, D + N)
    return JointGaussian(mean=mean, cov=symmetrize(cov), blocks=blocks)


def random_pd(rng, d, scale=1.0, jitter=0.1):
    A = rng.normal(size=(d, d))
    return scale * (A @ A.T / d + jitter * np.eye(d))


@dataclass
class OracleErrors:
    hyper_mean: float = 0.0
    hyper_cov: float = 0.0
    marginal_mean: float = 0.0
    marginal_cov: float = 0.0

    @property
    def worst(self) -> float:
        return max(self.hyper_mean, self.hyper_cov, self.marginal_mean, self.marginal_cov)

    def merge(self, other: "OracleErrors"):
        for k in ("hyper_mean", "hyper_cov", "marginal_mean", "marginal_cov"):
            setattr(self, k, max(getattr(self, k), getattr(other, k)))


def compare_instance(mu_q, Sigma_q, Sigma_0, sigma, m, tasks, actions, rewards) -> OracleErrors:
    d = len(mu_q)
    stats = [TaskStats.empty(d) for _ in range(m)]
    for s, a, y in zip(tasks, actions, rewards):
        stats[s] = update_task_stats(stats[s], a, y, sigma)
    hyper = hyper_posterior_linear(mu_q, Sigma_q, Sigma_0, stats)

    joint = hierarchical_joint(mu_q, Sigma_q, Sigma_0, sigma, m, tasks, actions)
    D = d * (m + 1)
    post = condition_joint_gaussian(joint, np.arange(D, D + len(tasks)), rewards)
    err = OracleErrors()
    om, oc = post.block("mu")
    err.hyper_mean = float(np.max(np.abs(hyper.mean - om)))
    err.hyper_cov = float(np.max(np.abs(hyper.cov - oc)))
    for s in range(m):
        mp = marginal_posterior(hyper, Sigma_0, stats[s])
        tm, tc = post.block(f"theta_{s}")
        err.marginal_mean = max(err.marginal_mean, float(np.max(np.abs(mp.mean - tm))))
        err.marginal_cov = max(err.marginal_cov, float(np.max(np.abs(mp.cov - tc))))
    return err


def random_history(rng, d, m, n_obs, mu_q, Sigma_q, Sigma_0, sigma):
    """Rewards sampled from the model itself, actions uniform in the unit ball."""
    mu = sample_mvn(mu_q, Sigma_q, rng)
    theta = np.array([sample_mvn(mu, Sigma_0, rng) for _ in range(m)])
    tasks = rng.integers(0, m, size=n_obs).tolist()
    actions = []
    for _ in range(n_obs):
        a = rng.normal(size=d)
        actions.append(a / np.linalg.norm(a) * rng.uniform() ** (1 / d))
    rewards = np.array([actions[j] @ theta[s] + sigma * rng.standard_normal() for j, s in enumerate(tasks)])
    return tasks, actions, rewards


def oracle_battery(n_instances: int, rng: np.random.Generator, d_max=3, m_max=4, max_obs=10) -> OracleErrors:
    """Worst errors over random models and histories."""
    worst = OracleErrors()
    for _ in range(n_instances):
        d = int(rng.integers(1, d_max + 1))
        m = int(rng.integers(1, m_max + 1))
        n_obs = int(rng.integers(0, max_obs + 1))
        mu_q = rng.normal(size=d)
        Sigma_q = random_pd(rng, d)
        Sigma_0 = random_pd(rng, d, scale=0.5)
        sigma = float(rng.uniform(0.3, 1.5))
        tasks, actions, rewards = random_history(rng, d, m, n_obs, mu_q, Sigma_q, Sigma_0, sigma)
        worst.merge(compare_instance(mu_q, Sigma_q, Sigma_0, sigma, m, tasks, actions, rewards))
    return worst


def model_battery(model, n_instances: int, rng: np.random.Generator, m_max=4, max_obs=10) -> OracleErrors:
    """Same check using one model's own priors and noise, with at most ``m_max`` tasks."""
    worst = OracleErrors()
    m = min(model.m, m_max)
    for _ in range(n_instances):
        n_obs = int(rng.integers(0, max_obs + 1))
        tasks, actions, rewards = random_history(rng, model.d, m, n_obs, model.mu_q, model.Sigma_q,
                                                 model.Sigma_0, model.sigma)
        worst.merge(compare_instance(model.mu_q, model.Sigma_q, model.Sigma_0, model.sigma, m,
                                     tasks, actions, rewards))
    return worst
