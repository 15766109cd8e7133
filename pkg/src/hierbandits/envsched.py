"""Hierarchical Gaussian environments and task-arrival schedules.

Task ids are 0-based throughout; round ``t`` is the ``t``-th entry (0-based)
of :attr:`Schedule.rounds`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from hierbandits.gausscore import cholesky_factor, sample_mvn, symmetrize

UNIT_BALL_TOL = 1e-12


class UnknownTask(KeyError):
    pass


class InfeasibleBatching(RuntimeError):
    pass


class UnitBallViolation(ValueError):
    pass


@dataclass(frozen=True)
class ActionSet:
    """A finite action set stored as a ``(K, d)`` array of row vectors."""

    vectors: np.ndarray
    standard_basis: bool = False

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if V.shape[0] == 0:
            raise ValueError("action set is empty")
        if not np.all(np.isfinite(V)):
            raise ValueError("action vectors must be finite")
        norms = np.linalg.norm(V, axis=1)
        if np.any(norms > 1 + UNIT_BALL_TOL):
            worst = int(np.argmax(norms))
            raise UnitBallViolation(f"action {worst} has norm {norms[worst]:.6g} > 1")
        object.__setattr__(self, "vectors", V)

    @classmethod
    def basis(cls, K: int) -> "ActionSet":
        return cls(np.eye(K), standard_basis=True)

    @classmethod
    def finite(cls, vectors) -> "ActionSet":
        return cls(np.asarray(vectors, dtype=float))

    @classmethod
    def uniform(cls, K: int, d: int, rng: np.random.Generator, low=-0.5, high=0.5) -> "ActionSet":
        return cls(rng.uniform(low, high, size=(K, d)))

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.K


@dataclass(frozen=True)
class UniformActions:
    """Recipe for an action set drawn i.i.d. from ``Uniform[low, high]^d`` per instance."""

    K: int
    low: float = -0.5
    high: float = 0.5

    def max_norm(self, d: int) -> float:
        return float(np.sqrt(d) * max(abs(self.low), abs(self.high)))

    def draw(self, d: int, rng: np.random.Generator) -> ActionSet:
        return ActionSet.uniform(self.K, d, rng, self.low, self.high)


@dataclass(frozen=True)
class ModelConfig:
    """Hyper-prior, task prior, noise, task counts and action set of one model."""

    mu_q: np.ndarray
    Sigma_q: np.ndarray
    Sigma_0: np.ndarray
    sigma: float
    m: int
    n: int
    L: int = 1
    actions: ActionSet | UniformActions = field(default_factory=lambda: UniformActions(10))
    reward_kind: str = "gaussian"

    def __post_init__(self):
        mu_q = np.atleast_1d(np.asarray(self.mu_q, dtype=float))
        d = mu_q.shape[0]
        object.__setattr__(self, "mu_q", mu_q)
        for name in ("Sigma_q", "Sigma_0"):
            S = np.asarray(getattr(self, name), dtype=float)
            if S.shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}, got {S.shape}")
            S = symmetrize(S)
            cholesky_factor(S)
            object.__setattr__(self, name, S)
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be at least 1")
        if not 1 <= self.L <= self.m:
            raise ValueError(f"need 1 <= L <= m, got L={self.L}, m={self.m}")
        if self.reward_kind not in ("gaussian", "bernoulli-misspecified"):
            raise ValueError(f"unknown reward_kind {self.reward_kind!r}")
        if isinstance(self.actions, ActionSet):
            if self.actions.d != d:
                raise ValueError(f"actions have dimension {self.actions.d}, model has {d}")
        elif self.actions.max_norm(d) > 1 + UNIT_BALL_TOL:
            raise UnitBallViolation(
                f"Uniform[{self.actions.low}, {self.actions.high}]^{d} leaves the unit ball"
            )

    @property
    def d(self) -> int:
        return self.mu_q.shape[0]

    @classmethod
    def isotropic(cls, d: int, sigma_q: float, sigma_0: float, sigma: float, m: int, n: int,
                  L: int = 1, mu_q=None, **kwargs) -> "ModelConfig":
        mu_q = np.zeros(d) if mu_q is None else mu_q
        return cls(mu_q, sigma_q**2 * np.eye(d), sigma_0**2 * np.eye(d), sigma, m, n, L, **kwargs)


@dataclass(frozen=True)
class EnvInstance:
    mu_star: np.ndarray
    theta_star: np.ndarray  # (m, d)
    actions: ActionSet
    config: ModelConfig

    def __post_init__(self):
        object.__setattr__(self, "_means", self.theta_star @ self.actions.vectors.T)

    @property
    def mean_rewards(self) -> np.ndarray:
        """``(m, K)`` table of ``a^T theta_s``."""
        return self._means

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.mu_star, self.theta_star, self.actions.vectors):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def sample_instance(cfg: ModelConfig, rng: np.random.Generator) -> EnvInstance:
    """Draw the action set (if random), then ``mu_* ~ N(mu_q, Sigma_q)`` and ``theta_s ~ N(mu_*, Sigma_0)``."""
    actions = cfg.actions if isinstance(cfg.actions, ActionSet) else cfg.actions.draw(cfg.d, rng)
    mu_star = sample_mvn(cfg.mu_q, cfg.Sigma_q, rng)
    L0 = cholesky_factor(cfg.Sigma_0)
    theta = mu_star + rng.standard_normal((cfg.m, cfg.d)) @ L0.T
    return EnvInstance(mu_star=mu_star, theta_star=theta, actions=actions, config=cfg)


def _check_task(inst: EnvInstance, s: int):
    if not 0 <= s < inst.config.m:
        raise UnknownTask(s)


def reward(inst: EnvInstance, s: int, a: int, rng: np.random.Generator) -> float:
    """Stochastic reward of action index ``a`` in task ``s``."""
    _check_task(inst, s)
    mean = inst.mean_rewards[s, a]
    if inst.config.reward_kind == "gaussian":
        return float(mean + inst.config.sigma * rng.standard_normal())
    p = min(max(mean, 0.0), 1.0)
    return float(rng.random() < p)


def optimal_action(inst: EnvInstance, s: int) -> int:
    """Index of ``argmax_a a^T theta_s``; the lowest index wins ties."""
    _check_task(inst, s)
    return int(np.argmax(inst.mean_rewards[s]))


@dataclass(frozen=True)
class Schedule:
    rounds: tuple[tuple[int, ...], ...]

    def __len__(self):
        return len(self.rounds)

    def __iter__(self):
        return iter(self.rounds)

    def __getitem__(self, t):
        return self.rounds[t]

    def counts(self, m: int) -> np.ndarray:
        c = np.zeros(m, dtype=int)
        for S in self.rounds:
            for s in S:
                c[s] += 1
        return c

    def validate(self, m: int, n: int, L: int):
        for t, S in enumerate(self.rounds):
            if len(S) > L:
                raise ValueError(f"round {t} acts in {len(S)} > L={L} tasks")
            if len(set(S)) != len(S):
                raise ValueError(f"round {t} repeats a task: {S}")
            if any(not 0 <= s < m for s in S):
                raise UnknownTask(S)
        if np.any(self.counts(m) > n):
            raise ValueError(f"some task appears more than n={n} times")


def build_sequential_schedule(m: int, n: int, order: str = "round-robin",
                              rng: Optional[np.random.Generator] = None) -> Schedule:
    if m < 1 or n < 1:
        raise ValueError("m and n must be at least 1")
    if order == "round-robin":
        seq = np.tile(np.arange(m), n)
    elif order == "random-permutation":
        if rng is None:
            raise ValueError("random-permutation order needs an rng")
        seq = rng.permutation(np.repeat(np.arange(m), n))
    else:
        raise ValueError(f"unknown order {order!r}")
    return Schedule(tuple((int(s),) for s in seq))


def build_meta_schedule(m: int, n: int) -> Schedule:
    """Task ``s`` is played for ``n`` consecutive rounds before task ``s + 1``."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be at least 1")
    return Schedule(tuple((t // n,) for t in range(m * n)))


def _weighted_subset(weights: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """Draw a ``k``-subset ``B`` with probability proportional to ``prod_{i in B} weights[i]``.

    Exact sequential sampling through elementary symmetric polynomials of
    the weight suffixes: item ``i`` joins when
    ``u < w_i e_{j-1}(w_{i+1:}) / e_j(w_{i:})`` with ``j`` slots still open.
    """
    w = weights / weights.max() if len(weights) else weights
    n = len(w)
    # e[i, j] = e_j(w[i:])
    e = np.zeros((n + 1, k + 1))
    e[:, 0] = 1.0
    for i in range(n - 1, -1, -1):
        e[i, 1:] = e[i + 1, 1:] + w[i] * e[i + 1, :-1]
    chosen, j = [], k
    for i in range(n):
        if j == 0:
            break
        if rng.random() * e[i, j] < w[i] * e[i + 1, j - 1]:
            chosen.append(i)
            j -= 1
    return chosen


def build_concurrent_schedule(m: int, interactions_per_task: int, L: int,
                              rng: np.random.Generator) -> Schedule:
    """Random batches of ``L`` distinct tasks, each task used ``interactions_per_task`` times.

    Batches are formed left to right. The law of each batch is that of taking
    ``L`` entries uniformly without replacement from what remains of the task
    list and re-drawing until the batch repeats no task and the remainder can
    still be split into duplicate-free batches. It is sampled directly,
    without the re-draws: a batch ``B`` has probability proportional to the
    product of the remaining counts of its tasks, and a task whose remaining
    count equals the number of rounds left must be included. A multiset with
    ``R * L`` entries splits into ``R`` duplicate-free batches exactly when no
    task has more than ``R`` entries, so the draw never dead-ends.
    """
    k = interactions_per_task
    if m < 1 or k < 1 or L < 1:
        raise ValueError("m, interactions_per_task and L must be at least 1")
    if (m * k) % L:
        raise InfeasibleBatching(f"m * interactions_per_task = {m * k} is not divisible by L={L}")
    if L > m:
        raise InfeasibleBatching(f"cannot fill batches of {L} distinct tasks from {m} tasks")
    if L == 1:
        return build_sequential_schedule(m, k, "random-permutation", rng)

    remaining = np.full(m, k, dtype=np.int64)
    n_rounds = m * k // L
    rounds = []
    for t in range(n_rounds):
        left = n_rounds - t
        forced = np.flatnonzero(remaining == left)
        free = np.flatnonzero((remaining > 0) & (remaining < left))
        need = L - len(forced)
        if need < 0 or need > len(free):
            raise InfeasibleBatching(f"round {t}: {len(forced)} tasks must act but L={L}")
        picked = free[_weighted_subset(remaining[free].astype(float), need, rng)]
        batch = rng.permutation(np.concatenate([forced, picked]))
        remaining[batch] -= 1
        rounds.append(tuple(int(s) for s in batch))
    return Schedule(tuple(rounds))
