"""Hierarchical Thompson sampling for multi-task Gaussian bandits."""

from hierbandits.gausscore import (
    AsymmetryTooLarge,
    JointGaussian,
    NotPositiveDefinite,
    cholesky_factor,
    condition_joint_gaussian,
    sample_mvn,
    solve_pd,
    symmetrize,
)
from hierbandits.envsched import (
    ActionSet,
    EnvInstance,
    InfeasibleBatching,
    ModelConfig,
    Schedule,
    UnknownTask,
    build_concurrent_schedule,
    build_meta_schedule,
    build_sequential_schedule,
    sample_instance,
)
from hierbandits.posterior import (
    HyperPosterior,
    MarginalPosterior,
    TaskConditional,
    TaskStats,
    hyper_posterior_karmed,
    hyper_posterior_linear,
    marginal_posterior,
    task_conditional_karmed,
    task_conditional_linear,
    telescoping_increment,
    update_task_stats,
)
from hierbandits.agents import ForcedExploration, HierTS, TaskPriorTS, marginal_ts, oracle_ts
from hierbandits.bounds import (
    BoundInputs,
    BoundReport,
    concurrent_linear_bound,
    karmed_bounds,
    sequential_linear_bound,
)

__version__ = "0.1.0"
