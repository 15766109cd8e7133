"""Replicated regret experiments on shared environment draws."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from hierbandits.agents import (
    BasisDoesNotSpan,
    ForcedExploration,
    HierTS,
    marginal_ts,
    oracle_ts,
    select_exploration_basis,
)
from hierbandits.bounds import (
    BoundInputs,
    BoundReport,
    agent_bound,
    concurrent_round_ratios,
    ratios_from_increments,
)
from hierbandits.envsched import (
    EnvInstance,
    Schedule,
    build_concurrent_schedule,
    build_meta_schedule,
    build_sequential_schedule,
    reward,
    sample_instance,
)
from hierbandits.harness.config import ExperimentConfig
from hierbandits.posterior import marginal_posterior, sigma_max_sq

# substream slots under SeedSequence(seed, spawn_key=(replication,))
ENV, SCHEDULE, REWARD, FIRST_AGENT = 0, 1, 2, 3


@dataclass
class RegretTrace:
    """Instantaneous regret per agent, shaped ``(replications, rounds)``."""

    agents: tuple[str, ...]
    instant: dict[str, np.ndarray]
    bound_values: dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return next(iter(self.instant.values())).shape[1] if self.instant else 0

    @property
    def replications(self) -> int:
        return next(iter(self.instant.values())).shape[0] if self.instant else 0

    def mean_instant(self, agent: str) -> np.ndarray:
        return self.instant[agent].mean(axis=0)

    def cumulative(self, agent: str) -> np.ndarray:
        return np.cumsum(self.instant[agent], axis=1)

    def mean_cum(self, agent: str) -> np.ndarray:
        return self.cumulative(agent).mean(axis=0)

    def stderr_cum(self, agent: str) -> np.ndarray:
        cum = self.cumulative(agent)
        if cum.shape[0] < 2:
            return np.zeros(cum.shape[1])
        return cum.std(axis=0, ddof=1) / np.sqrt(cum.shape[0])

    def final(self, agent: str) -> tuple[float, float]:
        """Mean and standard error of the final cumulative regret."""
        if self.rounds == 0:
            return 0.0, 0.0
        return float(self.mean_cum(agent)[-1]), float(self.stderr_cum(agent)[-1])


@dataclass
class ReplicationResult:
    index: int
    instant: dict[str, np.ndarray]
    bounds: dict[str, BoundReport]
    fingerprints: dict[str, str]
    diagnostics: dict[str, dict]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trace: RegretTrace
    bounds: dict[str, BoundReport]
    replications: list[ReplicationResult]


def replication_streams(seed: int, r: int, n_agents: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed, spawn_key=(r,)).spawn(FIRST_AGENT + n_agents)


def build_schedule(cfg: ExperimentConfig, rng: np.random.Generator) -> Schedule:
    mc = cfg.model
    if cfg.schedule == "meta":
        return build_meta_schedule(mc.m, mc.n)
    if cfg.schedule == "sequential":
        return build_sequential_schedule(mc.m, mc.n, cfg.order, rng)
    return build_concurrent_schedule(mc.m, mc.n, mc.L, rng)


def make_agent(name: str, cfg: ExperimentConfig, inst: EnvInstance, rng: np.random.Generator,
               basis: Optional[list[int]]):
    mc = cfg.model
    if name == "HierTS":
        agent = HierTS.from_config(mc, inst.actions, rng)
    elif name == "OracleTS":
        agent = oracle_ts(inst.mu_star, mc, inst.actions, rng)
    elif name == "MarginalTS":
        agent = marginal_ts(mc, inst.actions, rng)
    else:
        raise ValueError(f"unknown agent {name!r}")
    if cfg.uses_forced_exploration(name):
        if basis is None:
            raise BasisDoesNotSpan("action set has no spanning basis")
        agent = ForcedExploration(agent, basis)
    return agent


def _bound_inputs(cfg: ExperimentConfig, inst: EnvInstance, eta: float) -> BoundInputs:
    mc = cfg.model
    return BoundInputs.from_matrices(mc.mu_q, mc.Sigma_q, mc.Sigma_0, mc.sigma, mc.m, mc.n, mc.L,
                                     eta, inst.actions.K)


def _karmed_model(actions, mc) -> bool:
    def iso(S):
        return np.allclose(S, S[0, 0] * np.eye(len(S)), rtol=0, atol=1e-15 * abs(S[0, 0]))
    return actions.standard_basis and iso(mc.Sigma_q) and iso(mc.Sigma_0)


def replication_bounds(cfg: ExperimentConfig, inst: EnvInstance, basis) -> dict[str, BoundReport]:
    eta = float(np.linalg.eigvalsh(inst.actions.vectors[basis].T @ inst.actions.vectors[basis])[0]) \
        if basis is not None else np.inf
    inp = _bound_inputs(cfg, inst, eta if cfg.concurrent else np.inf)
    karmed = _karmed_model(inst.actions, cfg.model)
    return {a: agent_bound(a, inp, cfg.concurrent, karmed) for a in cfg.agents}


def _safe_basis(inst: EnvInstance):
    try:
        return select_exploration_basis(inst.actions)
    except BasisDoesNotSpan:
        return None


class _Diagnostics:
    """Per-round belief checks for HierTS: top-eigenvalue cap, variance sum, concurrency ratios."""

    def __init__(self, cfg: ExperimentConfig, agent, basis):
        mc = cfg.model
        self.hier = agent.inner if isinstance(agent, ForcedExploration) else agent
        self.cap = sigma_max_sq(mc.Sigma_q, mc.Sigma_0)
        self.eta = agent.eta if isinstance(agent, ForcedExploration) else (
            float(np.linalg.eigvalsh(self.hier.actions.vectors[basis].T
                                     @ self.hier.actions.vectors[basis])[0]) if basis else np.inf)
        self.max_lambda1 = 0.0
        self.violations = 0
        self.beliefs = 0
        self.variance_sum = 0.0
        self.ratios: list[float] = []

    def before_update(self, tasks, actions):
        h = self.hier
        self._before = [h.stats[s] for s in tasks]
        self._before_P = h._P[list(tasks)].copy()
        self._precision = h.hyper.precision
        for s, a in zip(tasks, actions):
            post = marginal_posterior(h.hyper, h.prior.Sigma_0, h.stats[s], h.prior.Sigma_0_inv)
            lam1 = float(np.linalg.eigvalsh(post.cov)[-1])
            self.beliefs += 1
            self.max_lambda1 = max(self.max_lambda1, lam1)
            if lam1 > self.cap * (1 + 1e-9):
                self.violations += 1
            v = h.actions.vectors[a]
            self.variance_sum += float(v @ post.cov @ v)

    def after_update(self, tasks):
        if len(tasks) < 2 or not np.isfinite(self.eta):
            return
        h = self.hier
        if h.karmed:
            after = [h.stats[s] for s in tasks]
            self.ratios.extend(concurrent_round_ratios(h.prior.Sigma_0_inv, self._precision,
                                                       self._before, after, self.eta, h.sigma))
            return
        increments = list(h._P[list(tasks)] - self._before_P)
        self.ratios.extend(ratios_from_increments(self._precision, increments,
                                                  [st.G for st in self._before], self.eta, h.sigma))

    def summary(self) -> dict:
        return {"sigma_max_sq": self.cap, "max_lambda1": self.max_lambda1, "beliefs": self.beliefs,
                "violations": self.violations, "variance_sum": self.variance_sum,
                "eta": self.eta, "max_ratio": max(self.ratios, default=1.0),
                "ratios": len(self.ratios)}


def run_replication(cfg: ExperimentConfig, r: int, diagnostics: bool = False) -> ReplicationResult:
    streams = replication_streams(cfg.seed, r, len(cfg.agents))
    inst = sample_instance(cfg.model, np.random.default_rng(streams[ENV]))
    schedule = build_schedule(cfg, np.random.default_rng(streams[SCHEDULE]))
    basis = _safe_basis(inst)
    means = inst.mean_rewards
    best = means.max(axis=1)

    instant, fingerprints, diags = {}, {}, {}
    for k, name in enumerate(cfg.agents):
        agent = make_agent(name, cfg, inst, np.random.default_rng(streams[FIRST_AGENT + k]), basis)
        # same reward stream for every agent: common random numbers
        reward_rng = np.random.default_rng(streams[REWARD])
        diag = _Diagnostics(cfg, agent, basis) if diagnostics and name == "HierTS" else None
        regret = np.zeros(len(schedule))
        for t, tasks in enumerate(schedule):
            chosen = agent.act(tasks)
            obs = [(s, a, reward(inst, s, a, reward_rng)) for s, a in zip(tasks, chosen)]
            regret[t] = sum(best[s] - means[s, a] for s, a in zip(tasks, chosen))
            if diag is not None:
                diag.before_update(tasks, chosen)
            agent.update(obs)
            if diag is not None:
                diag.after_update(tasks)
        instant[name] = regret
        fingerprints[name] = inst.fingerprint()
        if diag is not None:
            diags[name] = diag.summary()
    bounds = replication_bounds(cfg, inst, basis) if cfg.bounds else {}
    return ReplicationResult(r, instant, bounds, fingerprints, diags)


def _worker(args):
    cfg, r, diagnostics = args
    return run_replication(cfg, r, diagnostics)


def mean_report(reports: Sequence[BoundReport]) -> BoundReport:
    """Field-wise mean of per-replication reports (they differ only through the drawn action set)."""
    vals = {f.name: float(np.mean([getattr(rep, f.name) for rep in reports]))
            for f in fields(BoundReport) if f.name != "regime"}
    return BoundReport(regime=reports[0].regime, **vals)


def run_experiment(cfg: ExperimentConfig, diagnostics: bool = False,
                   workers: Optional[int] = None) -> ExperimentResult:
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, r, diagnostics) for r in range(cfg.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_worker, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        reps = [_worker(j) for j in jobs]
    reps.sort(key=lambda rep: rep.index)
    instant = {a: np.vstack([rep.instant[a] for rep in reps]) for a in cfg.agents}
    bounds = {a: mean_report([rep.bounds[a] for rep in reps]) for a in cfg.agents} if cfg.bounds else {}
    trace = RegretTrace(cfg.agents, instant, {a: (bounds[a].bound if a in bounds else None) for a in cfg.agents})
    return ExperimentResult(cfg, trace, bounds, reps)


def experiment_bounds(cfg: ExperimentConfig) -> dict[str, BoundReport]:
    """Bound reports alone: draws each replication's environment without simulating."""
    per_rep = []
    for r in range(cfg.replications):
        streams = replication_streams(cfg.seed, r, len(cfg.agents))
        inst = sample_instance(cfg.model, np.random.default_rng(streams[ENV]))
        per_rep.append(replication_bounds(cfg, inst, _safe_basis(inst)))
    return {a: mean_report([b[a] for b in per_rep]) for a in cfg.agents}


@dataclass
class SweepRow:
    L: int
    rounds: int
    agent: str
    final_mean: float
    final_stderr: float


def sweep_concurrency(cfg: ExperimentConfig, Ls: Sequence[int], workers: Optional[int] = None,
                      diagnostics: bool = False) -> tuple[list[SweepRow], dict[int, ExperimentResult]]:
    rows, results = [], {}
    for L in Ls:
        model = replace(cfg.model, L=int(L))
        sub = replace(cfg, model=model, schedule="concurrent")
        res = run_experiment(sub, diagnostics=diagnostics, workers=workers)
        results[int(L)] = res
        for a in cfg.agents:
            mean, se = res.trace.final(a)
            rows.append(SweepRow(int(L), res.trace.rounds, a, mean, se))
    return rows, results
