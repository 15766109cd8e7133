from hierbandits.harness.config import (
    BadValue,
    ConfigError,
    ExperimentConfig,
    MissingKey,
    parse_config,
    preset_config,
)
from hierbandits.harness.output import emit_bounds_csv, emit_csv, emit_plot, emit_sweep_csv, read_regret_csv
from hierbandits.harness.runner import (
    ExperimentResult,
    RegretTrace,
    experiment_bounds,
    run_experiment,
    run_replication,
    sweep_concurrency,
)
