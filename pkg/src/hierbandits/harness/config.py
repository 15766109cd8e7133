"""Experiment configuration files.

The format is INI-style with sections ``[model]``, ``[schedule]``,
``[agents]`` and ``[run]``. Matrices are given either as an isotropic scale
(``sigma_q = 0.5`` means ``Sigma_q = 0.25 I``) or as a row-major list
(``Sigma_q = [[0.3, 0.1], [0.1, 0.2]]``, flat lists of length ``d*d`` also
work). ``preset = <name>`` in ``[model]`` loads a named parameter set that the
remaining keys may override.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from hierbandits.envsched import ActionSet, ModelConfig, UniformActions, UnitBallViolation

AGENT_NAMES = ("HierTS", "OracleTS", "MarginalTS")
SCHEDULE_KINDS = ("sequential", "meta", "concurrent")

PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "paper-synthetic-small": {
        "model": {"d": 2, "actions": "uniform", "num_actions": 10, "action_low": -0.5,
                  "action_high": 0.5, "m": 10, "n": 200, "L": 5, "sigma": 0.5,
                  "sigma_q": 0.5, "sigma_0": 0.1, "mu_q": 0.0},
        "schedule": {"kind": "concurrent"},
    },
    "paper-synthetic-large": {
        "model": {"d": 2, "actions": "uniform", "num_actions": 10, "action_low": -0.5,
                  "action_high": 0.5, "m": 10, "n": 200, "L": 5, "sigma": 0.5,
                  "sigma_q": 1.0, "sigma_0": 0.1, "mu_q": 0.0},
        "schedule": {"kind": "concurrent"},
    },
}

MODEL_KEYS = {"preset", "d", "mu_q", "sigma_q", "Sigma_q", "sigma_0", "Sigma_0", "sigma", "m", "n",
              "L", "actions", "num_actions", "action_low", "action_high", "reward_kind"}
SCHEDULE_KEYS = {"kind", "order"}
AGENT_KEYS = {"names", "forced_exploration"}
RUN_KEYS = {"replications", "seed", "out_dir", "bounds", "workers"}
SECTIONS = {"model": MODEL_KEYS, "schedule": SCHEDULE_KEYS, "agents": AGENT_KEYS, "run": RUN_KEYS}


class ConfigError(ValueError):
    pass


class MissingKey(ConfigError):
    def __init__(self, key: str):
        super().__init__(f"missing required key {key}")
        self.key = key


class BadValue(ConfigError):
    def __init__(self, key: str, reason: str):
        super().__init__(f"bad value for {key}: {reason}")
        self.key = key
        self.reason = reason


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    schedule: str = "sequential"
    order: str = "random-permutation"
    agents: tuple[str, ...] = AGENT_NAMES
    replications: int = 100
    seed: int = 0
    out_dir: str = "out"
    bounds: bool = True
    forced_exploration: str = "auto"
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise BadValue("run.replications", "must be at least 1")
        if self.schedule not in SCHEDULE_KINDS:
            raise BadValue("schedule.kind", f"expected one of {SCHEDULE_KINDS}")
        if self.order not in ("round-robin", "random-permutation"):
            raise BadValue("schedule.order", "expected round-robin or random-permutation")
        if self.forced_exploration not in ("auto", "on", "off"):
            raise BadValue("agents.forced_exploration", "expected auto, on or off")
        for a in self.agents:
            if a not in AGENT_NAMES:
                raise BadValue("agents.names", f"unknown agent {a!r}")
        if len(set(self.agents)) != len(self.agents) or not self.agents:
            raise BadValue("agents.names", "need a non-empty list without repeats")
        if self.schedule != "concurrent" and self.model.L != 1:
            raise BadValue("model.L", f"{self.schedule} schedules act in one task per round")
        if self.workers < 1:
            raise BadValue("run.workers", "must be at least 1")

    @property
    def concurrent(self) -> bool:
        return self.schedule == "concurrent" and self.model.L > 1

    def uses_forced_exploration(self, agent: str) -> bool:
        if self.forced_exploration == "auto":
            return self.concurrent and agent == "HierTS"
        return self.forced_exploration == "on"

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _number(key: str, raw: Any, kind=float, positive=False, nonneg=False):
    try:
        v = kind(raw) if not isinstance(raw, str) else kind(json.loads(raw))
    except (ValueError, TypeError, json.JSONDecodeError):
        raise BadValue(key, f"expected {'an integer' if kind is int else 'a number'}, got {raw!r}") from None
    if kind is int and isinstance(raw, str) and str(v) != raw.strip():
        raise BadValue(key, f"expected an integer, got {raw!r}")
    if not np.isfinite(v):
        raise BadValue(key, "must be finite")
    if positive and not v > 0:
        raise BadValue(key, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise BadValue(key, f"must be non-negative, got {v}")
    return v


def _array(key: str, raw: Any) -> np.ndarray:
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError:
            raise BadValue(key, f"expected a number or a JSON list, got {raw!r}") from None
    try:
        arr = np.asarray(raw, dtype=float)
    except (ValueError, TypeError):
        raise BadValue(key, "ragged or non-numeric list") from None
    if not np.all(np.isfinite(arr)):
        raise BadValue(key, "entries must be finite")
    return arr


def _cov(section: dict, name: str, d: int) -> np.ndarray:
    scale_key, full_key = name.lower(), name
    if full_key in section and scale_key in section:
        raise BadValue(f"model.{full_key}", f"give either {scale_key} or {full_key}, not both")
    if full_key in section:
        M = _array(f"model.{full_key}", section[full_key])
        if M.size == d * d:
            M = M.reshape(d, d)
        if M.shape != (d, d):
            raise BadValue(f"model.{full_key}", f"expected a {d}x{d} matrix")
        if not np.allclose(M, M.T, rtol=1e-8, atol=0):
            raise BadValue(f"model.{full_key}", "matrix is not symmetric")
        if np.linalg.eigvalsh(0.5 * (M + M.T))[0] <= 0:
            raise BadValue(f"model.{full_key}", "matrix is not positive definite")
        return M
    if scale_key in section:
        s = _number(f"model.{scale_key}", section[scale_key], positive=True)
        return s**2 * np.eye(d)
    raise MissingKey(f"model.{scale_key}")


def _model(section: dict) -> ModelConfig:
    def need(key):
        if key not in section:
            raise MissingKey(f"model.{key}")
        return section[key]

    d = _number("model.d", need("d"), int, positive=True)
    mu_q = _array("model.mu_q", section.get("mu_q", 0.0))
    if mu_q.ndim == 0:
        mu_q = np.full(d, float(mu_q))
    if mu_q.shape != (d,):
        raise BadValue("model.mu_q", f"expected a scalar or a list of length {d}")
    Sigma_q = _cov(section, "Sigma_q", d)
    Sigma_0 = _cov(section, "Sigma_0", d)
    sigma = _number("model.sigma", need("sigma"), positive=True)
    m = _number("model.m", need("m"), int, positive=True)
    n = _number("model.n", need("n"), int, positive=True)
    L = _number("model.L", section.get("L", 1), int, positive=True)
    if L > m:
        raise BadValue("model.L", f"must not exceed m={m}")
    kind = str(section.get("reward_kind", "gaussian"))
    if kind not in ("gaussian", "bernoulli-misspecified"):
        raise BadValue("model.reward_kind", "expected gaussian or bernoulli-misspecified")

    spec = section.get("actions", "uniform")
    if isinstance(spec, str) and spec.strip() in ("uniform", "basis"):
        spec = spec.strip()
        if spec == "basis":
            K = _number("model.num_actions", section.get("num_actions", d), int, positive=True)
            if K != d:
                raise BadValue("model.num_actions", f"a standard basis in R^{d} has {d} actions")
            actions = ActionSet.basis(d)
        else:
            K = _number("model.num_actions", section.get("num_actions", 10), int, positive=True)
            lo = _number("model.action_low", section.get("action_low", -0.5))
            hi = _number("model.action_high", section.get("action_high", 0.5))
            if not lo < hi:
                raise BadValue("model.action_high", "must exceed action_low")
            actions = UniformActions(K, lo, hi)
            if actions.max_norm(d) > 1 + 1e-12:
                raise UnitBallViolation(
                    f"model.actions: Uniform[{lo}, {hi}]^{d} reaches norm {actions.max_norm(d):.4g} > 1")
    else:
        V = _array("model.actions", spec)
        if V.ndim != 2 or V.shape[1] != d:
            raise BadValue("model.actions", f"expected 'uniform', 'basis' or a list of length-{d} vectors")
        norms = np.linalg.norm(V, axis=1)
        if np.any(norms > 1 + 1e-12):
            raise UnitBallViolation(f"model.actions: action {int(np.argmax(norms))} has norm {norms.max():.4g} > 1")
        actions = ActionSet.finite(V)
    return ModelConfig(mu_q, Sigma_q, Sigma_0, sigma, m, n, L, actions, kind)


def _bool(key: str, raw: Any) -> bool:
    if isinstance(raw, bool):
        return raw
    v = str(raw).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise BadValue(key, f"expected a boolean, got {raw!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration; raises :class:`ConfigError` subclasses with the key path."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    raw: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    for name in cp.sections():
        if name not in SECTIONS:
            raise BadValue(name, "unknown section")
        for key, value in cp.items(name):
            if key not in SECTIONS[name]:
                raise BadValue(f"{name}.{key}", "unknown key")
            raw[name][key] = value

    preset = raw["model"].pop("preset", None)
    if preset is not None:
        preset = preset.strip()
        if preset not in PRESETS:
            raise BadValue("model.preset", f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        for name, values in PRESETS[preset].items():
            merged = dict(values)
            if name == "model":
                # an explicit full matrix replaces the preset's isotropic scale
                for full in ("Sigma_q", "Sigma_0"):
                    if full in raw[name]:
                        merged.pop(full.lower(), None)
            merged.update(raw[name])
            raw[name] = merged

    model = _model(raw["model"])
    sched = raw["schedule"]
    kind = str(sched.get("kind", "concurrent" if model.L > 1 else "sequential")).strip()
    agents_raw = raw["agents"].get("names")
    if agents_raw is None:
        agents = AGENT_NAMES
    else:
        agents = tuple(a.strip() for a in str(agents_raw).split(",") if a.strip())
    run = raw["run"]
    return ExperimentConfig(
        model=model,
        schedule=kind,
        order=str(sched.get("order", "random-permutation")).strip(),
        agents=agents,
        replications=_number("run.replications", run.get("replications", 100), int, positive=True),
        seed=_number("run.seed", run.get("seed", 0), int, nonneg=True),
        out_dir=str(run.get("out_dir", "out")).strip(),
        bounds=_bool("run.bounds", run.get("bounds", True)),
        forced_exploration=str(raw["agents"].get("forced_exploration", "auto")).strip(),
        workers=_number("run.workers", run.get("workers", 1), int, positive=True),
    )


def preset_config(name: str, **overrides) -> ExperimentConfig:
    """Config built from a preset alone, with optional field overrides."""
    return parse_config(f"[model]\npreset = {name}\n").with_overrides(**overrides)
