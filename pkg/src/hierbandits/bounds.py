"""Bayes regret bound constants for HierTS and its two TS baselines.

All bounds use ``delta = 1 / (m n)``. The sequential tail term is taken
explicitly as ``sqrt(2/pi) * sigma_max * d^{3/2}`` (``K`` for finite arms);
concurrent bounds add the forced-exploration cost on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import inf, isinf, log, log1p, pi, sqrt
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from hierbandits.gausscore import pd_inverse, symmetrize
from hierbandits.posterior import TaskStats, task_contribution


@dataclass(frozen=True)
class BoundInputs:
    lam1_0: float
    lamd_0: float
    lam1_q: float
    sigma: float
    d: int
    m: int
    n: int
    L: int = 1
    eta: float = inf
    K: Optional[int] = None
    mu_q_norm: float = 0.0  # ||mu_q|| in the (Sigma_q + Sigma_0)^{-1} norm
    lam1_marginal: Optional[float] = None  # lambda_1(Sigma_q + Sigma_0)
    lamd_marginal: Optional[float] = None  # lambda_d(Sigma_q + Sigma_0)

    def __post_init__(self):
        if not (self.lam1_0 > 0 and self.lamd_0 > 0 and self.lamd_0 <= self.lam1_0 * (1 + 1e-12)):
            raise ValueError("need 0 < lamd_0 <= lam1_0")
        if self.lam1_q < 0:
            raise ValueError("lam1_q must be non-negative")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.d < 1 or self.m < 1 or self.n < 1:
            raise ValueError("d, m, n must be at least 1")
        if not 1 <= self.L <= self.m:
            raise ValueError(f"need 1 <= L <= m, got L={self.L}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @classmethod
    def from_matrices(cls, mu_q, Sigma_q, Sigma_0, sigma, m, n, L=1, eta=inf, K=None) -> "BoundInputs":
        mu_q = np.asarray(mu_q, dtype=float)
        w0 = np.linalg.eigvalsh(symmetrize(Sigma_0))
        wq = np.linalg.eigvalsh(symmetrize(Sigma_q))
        marg = symmetrize(np.asarray(Sigma_q) + np.asarray(Sigma_0))
        norm = float(np.sqrt(mu_q @ pd_inverse(marg) @ mu_q))
        wm = np.linalg.eigvalsh(marg)
        return cls(float(w0[-1]), float(w0[0]), float(wq[-1]), float(sigma), len(mu_q), m, n, L,
                   eta, K, norm, float(wm[-1]), float(wm[0]))

    @classmethod
    def from_model(cls, cfg, eta=inf) -> "BoundInputs":
        K = cfg.actions.K
        return cls.from_matrices(cfg.mu_q, cfg.Sigma_q, cfg.Sigma_0, cfg.sigma, cfg.m, cfg.n, cfg.L, eta, K)


@dataclass(frozen=True)
class BoundReport:
    regime: str
    c: float
    c_q: float
    c1: float
    c2: float
    c3: float
    c4: float
    sigma_max: float
    bound: float

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in ("regime", "c", "c_q", "c1", "c2", "c3", "c4", "sigma_max", "bound")}


def _ratio_log(x: float, sigma: float) -> float:
    """``x / log(1 + x / sigma^2)``, continuous at ``x = 0``."""
    return sigma**2 if x == 0 else x / log1p(x / sigma**2)


def c4_constant(lam1_q: float, lam1_0: float, sigma: float, eta: float, L: int) -> float:
    """Price of concurrency: bounds how much within-round data could shrink the hyper-posterior."""
    if L == 1 and lam1_q == 0:
        return 1.0
    width = lam1_0 + (0.0 if isinf(eta) else sigma**2 / eta)
    return 1.0 + lam1_q * width / sigma**2 / (lam1_q + width / L)


def _constants(inp: BoundInputs, dim: int, c4: float):
    c = 1.0 + inp.lam1_0 / inp.sigma**2
    c_q = inp.lam1_0**2 * inp.lam1_q / inp.lamd_0**2
    c1 = _ratio_log(inp.lam1_0, inp.sigma) * log1p(inp.lam1_0 * inp.n / (inp.sigma**2 * dim))
    if inp.lam1_q == 0:
        c2 = 0.0
    else:
        c2 = c_q * c * c4 / log1p(c_q / inp.sigma**2) * log1p(inp.lam1_q * inp.m / inp.lamd_0)
    sigma_max = sqrt(inp.lam1_0 + c_q)
    return c, c_q, c1, c2, sigma_max


def _leading(inp: BoundInputs, c1: float, c2: float, dim: int, finite: bool) -> float:
    mn = inp.m * inp.n
    core = 2 * mn * (c1 * inp.m + c2) * log(mn)
    return sqrt(dim * core) if finite else dim * sqrt(core)


def _forced_cost(inp: BoundInputs, dim: int) -> float:
    lam = inp.lam1_marginal if inp.lam1_marginal is not None else inp.lam1_q + inp.lam1_0
    return 2 * sqrt(lam) * (inp.mu_q_norm + sqrt(dim)) * dim * inp.m


def sequential_linear_bound(inp: BoundInputs) -> BoundReport:
    c, c_q, c1, c2, smax = _constants(inp, inp.d, 1.0)
    c3 = sqrt(2 / pi) * smax * inp.d**1.5
    return BoundReport("sequential-linear", c, c_q, c1, c2, c3, 1.0, smax,
                       _leading(inp, c1, c2, inp.d, False) + c3)


def concurrent_linear_bound(inp: BoundInputs) -> BoundReport:
    c4 = c4_constant(inp.lam1_q, inp.lam1_0, inp.sigma, inp.eta, inp.L)
    c, c_q, c1, c2, smax = _constants(inp, inp.d, c4)
    c3 = sqrt(2 / pi) * smax * inp.d**1.5 + _forced_cost(inp, inp.d)
    return BoundReport("concurrent-linear", c, c_q, c1, c2, c3, c4, smax,
                       _leading(inp, c1, c2, inp.d, False) + c3)


def karmed_bounds(inp: BoundInputs, concurrent: Optional[bool] = None) -> BoundReport:
    """K-armed (standard basis) bounds with scalar ``sigma_0^2 = lam1_0``, ``sigma_q^2 = lam1_q``, ``eta = 1``."""
    K = inp.K if inp.K is not None else inp.d
    concurrent = inp.L > 1 if concurrent is None else concurrent
    iso = replace(inp, lamd_0=inp.lam1_0, eta=1.0)
    c4 = c4_constant(iso.lam1_q, iso.lam1_0, iso.sigma, 1.0, iso.L) if concurrent else 1.0
    c, c_q, c1, c2, smax = _constants(iso, K, c4)
    c3 = sqrt(2 / pi) * smax * K
    if concurrent:
        c3 += _forced_cost(iso, K)
    regime = "concurrent-karmed" if concurrent else "sequential-karmed"
    return BoundReport(regime, c, c_q, c1, c2, c3, c4, smax, _leading(iso, c1, c2, K, True) + c3)


def agent_bound(agent: str, inp: BoundInputs, concurrent: bool, karmed: bool = False) -> BoundReport:
    """Bound for one of the three agents.

    OracleTS knows the hyper-parameter, so its bound drops the hyper term.
    MarginalTS is bounded as independent TS whose task prior is the marginal
    ``N(mu_q, Sigma_q + Sigma_0)``.
    """
    if agent == "OracleTS":
        inp = replace(inp, lam1_q=0.0, L=1)
        concurrent = False
    elif agent == "MarginalTS":
        lam1 = inp.lam1_marginal if inp.lam1_marginal is not None else inp.lam1_0 + inp.lam1_q
        lamd = inp.lamd_marginal if inp.lamd_marginal is not None else inp.lamd_0
        inp = replace(inp, lam1_0=lam1, lamd_0=lamd, lam1_q=0.0, L=1)
        concurrent = False
    if karmed:
        return karmed_bounds(inp, concurrent)
    return concurrent_linear_bound(inp) if concurrent else sequential_linear_bound(inp)


def posterior_variance_sum(covs: Sequence[np.ndarray], actions: Sequence[np.ndarray]) -> float:
    """Sum of ``a^T Sigma a`` over the recorded (covariance, action) pairs."""
    return float(sum(a @ S @ a for S, a in zip(covs, actions)))


def posterior_variance_cap(report: BoundReport, inp: BoundInputs) -> float:
    """Analytic cap on ``posterior_variance_sum`` over a whole run, ``dim * (c1 m + c2)``."""
    dim = (inp.K if inp.K is not None else inp.d) if report.regime.endswith("karmed") else inp.d
    return dim * (report.c1 * inp.m + report.c2)


def precision_ratio(precision_with: np.ndarray, precision_without: np.ndarray) -> float:
    """``lambda_1(P_with P_without^{-1})``, via the generalized symmetric eigenproblem."""
    w = linalg.eigh(symmetrize(precision_with), symmetrize(precision_without), eigvals_only=True)
    return float(w[-1])


def concurrent_round_ratios(Sigma_0_inv: np.ndarray, base_precision: np.ndarray,
                            before: Sequence[TaskStats], after: Sequence[TaskStats],
                            eta: float, sigma: float) -> list[float]:
    """Ratios for the sufficiently explored tasks of one concurrent round.

    ``before[i]``/``after[i]`` are task ``i``'s statistics at the start and end
    of the round; ``base_precision`` is the round-start hyper-precision. Tasks
    are ordered explored-first, and task ``i`` is credited with the
    within-round data of every task placed ahead of it.
    """
    increments = [task_contribution(Sigma_0_inv, a)[0] - task_contribution(Sigma_0_inv, b)[0]
                  for b, a in zip(before, after)]
    return ratios_from_increments(base_precision, increments, [st.G for st in before], eta, sigma)


def ratios_from_increments(base_precision, increments, grams, eta: float, sigma: float) -> list[float]:
    thresh = eta / sigma**2 * (1 - 1e-9)
    order = [i for i, G in enumerate(grams) if np.linalg.eigvalsh(G)[0] >= thresh]
    P = np.array(base_precision, dtype=float)
    ratios = []
    for i in order:
        ratios.append(precision_ratio(P, base_precision))
        P = P + increments[i]
    return ratios
