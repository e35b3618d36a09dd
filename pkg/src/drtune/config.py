"""Experiment configuration and its flat key=value file format.

Config files are plain text, one `key = value` per line, with dotted
section prefixes for the nested solver settings::

    env_id = cartpole
    real_gap_multipliers = 1.3, 1.3, 1.5, 1.5, 1.1
    seeds = 0, 1, 2, 3, 4
    inner.learning_rate = 3e-4
    outer.population_size = 10
    sf.step_size = 0.1

Missing keys fall back to per-environment defaults; unknown keys are
errors. `#` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .envsim import ENV_IDS, make_spec
from .errors import ConfigError
from .outeropt import CemConfig, SfConfig
from .ppo import PpoConfig

DEFAULT_REAL_GAP = {
    # masses x1.3, dampings x1.5, gravity x1.1
    "pointmass": (1.3, 1.5, 1.1),
    "cartpole": (1.3, 1.3, 1.5, 1.5, 1.1),
}
DEFAULT_TOTAL_UPDATES = {"pointmass": 80, "cartpole": 150}

OUTER_METHODS = ("cem", "score_function")
DISCOUNT_MODES = ("undiscounted", "discounted")


@dataclass(frozen=True)
class ExperimentConfig:
    env_id: str = "cartpole"
    real_gap_multipliers: tuple = DEFAULT_REAL_GAP["cartpole"]
    inner: PpoConfig = field(default_factory=PpoConfig)
    outer: CemConfig = field(default_factory=CemConfig)
    sf: SfConfig = field(default_factory=SfConfig)
    outer_method: str = "cem"
    eval_episodes: int = 20
    eval_discount: str = "undiscounted"
    eval_gamma: float = 0.99
    seeds: tuple = (0, 1, 2, 3, 4)
    output_path: str = "runs/experiment.jsonl"
    parallel_candidates: int = 1
    relative_scale: bool = False
    evals_per_candidate: int = 1

    def validate(self) -> None:
        if self.env_id not in ENV_IDS:
            raise ConfigError(f"env_id must be one of {ENV_IDS}, got {self.env_id!r}")
        spec = make_spec(self.env_id)
        mult = np.asarray(self.real_gap_multipliers, dtype=np.float64)
        if mult.shape != (spec.param_dim,):
            raise ConfigError(
                f"real_gap_multipliers needs {spec.param_dim} entries for {self.env_id}, "
                f"got {len(self.real_gap_multipliers)}"
            )
        if not np.all(mult > 0.0):
            raise ConfigError("real_gap_multipliers must be strictly positive")
        if self.outer_method not in OUTER_METHODS:
            raise ConfigError(f"outer_method must be one of {OUTER_METHODS}")
        if self.eval_discount not in DISCOUNT_MODES:
            raise ConfigError(f"eval_discount must be one of {DISCOUNT_MODES}")
        if not (0.0 < self.eval_gamma <= 1.0):
            raise ConfigError(f"eval_gamma must be in (0, 1], got {self.eval_gamma}")
        if self.eval_episodes < 1:
            raise ConfigError(f"eval_episodes must be >= 1, got {self.eval_episodes}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if any(int(s) < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        if self.parallel_candidates < 1:
            raise ConfigError("parallel_candidates must be >= 1")
        if self.evals_per_candidate < 1:
            raise ConfigError("evals_per_candidate must be >= 1")
        try:
            self.inner.validate()
            self.outer.validate()
            self.sf.validate()
        except Exception as exc:
            raise ConfigError(str(exc)) from exc


def default_config(env_id: str = "cartpole") -> ExperimentConfig:
    if env_id not in ENV_IDS:
        raise ConfigError(f"env_id must be one of {ENV_IDS}, got {env_id!r}")
    return ExperimentConfig(
        env_id=env_id,
        real_gap_multipliers=DEFAULT_REAL_GAP[env_id],
        inner=PpoConfig(total_updates=DEFAULT_TOTAL_UPDATES[env_id]),
        output_path=f"runs/{env_id}.jsonl",
    )


# ---------------------------------------------------------------------------
# File parsing
# ---------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str):
    return tuple(float(p) for p in text.split(","))


def _parse_int_list(text: str):
    return tuple(int(p) for p in text.split(","))


def _parse_std(text: str):
    """Search/sampling spread: 'default', one scalar, or a comma list."""
    if text.lower() == "default":
        return None
    if "," in text:
        return _parse_float_list(text)
    return float(text)


_TOP_FIELDS = {
    "env_id": str,
    "real_gap_multipliers": _parse_float_list,
    "outer_method": str,
    "eval_episodes": int,
    "eval_discount": str,
    "eval_gamma": float,
    "seeds": _parse_int_list,
    "output_path": str,
    "parallel_candidates": int,
    "relative_scale": _parse_bool,
    "evals_per_candidate": int,
}

_SECTION_FIELDS = {
    "inner": {
        "gamma": float,
        "gae_lambda": float,
        "clip_ratio": float,
        "epochs_per_update": int,
        "minibatches": int,
        "learning_rate": float,
        "value_coef": float,
        "entropy_coef": float,
        "steps_per_update": int,
        "total_updates": int,
        "advantage_normalization": _parse_bool,
    },
    "outer": {
        "population_size": int,
        "elite_fraction": float,
        "iterations": int,
        "initial_search_std": _parse_std,
        "noise_floor": float,
        "smoothing": float,
    },
    "sf": {
        "steps": int,
        "population": int,
        "step_size": float,
        "sampling_std": _parse_std,
    },
}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    top: dict = {}
    sections: dict = {"inner": {}, "outer": {}, "sf": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if "." in key:
            section, _, name = key.partition(".")
            fields = _SECTION_FIELDS.get(section)
            if fields is None or name not in fields:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            parser = fields[name]
            bucket = sections[section]
        elif key in _TOP_FIELDS:
            parser = _TOP_FIELDS[key]
            bucket = top
            name = key
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if name in bucket:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            bucket[name] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc

    method = top.get("outer_method")
    if method == "sf":
        top["outer_method"] = "score_function"

    cfg = default_config(top.get("env_id", "cartpole"))
    cfg = replace(
        cfg,
        inner=replace(cfg.inner, **sections["inner"]),
        outer=replace(cfg.outer, **sections["outer"]),
        sf=replace(cfg.sf, **sections["sf"]),
        **{k: v for k, v in top.items() if k != "env_id"},
    )
    cfg.validate()
    return cfg


def parse_config_file(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def config_snapshot(cfg: ExperimentConfig) -> dict:
    """Experiment-defining fields for the record header.

    Execution details (output path, worker count) are excluded: they do
    not affect results, and record files must be identical across them.
    """

    def std_value(raw):
        if raw is None:
            return "default"
        arr = np.asarray(raw, dtype=np.float64)
        return float(arr) if arr.ndim == 0 else [float(x) for x in arr]

    return {
        "env_id": cfg.env_id,
        "real_gap_multipliers": [float(m) for m in cfg.real_gap_multipliers],
        "outer_method": cfg.outer_method,
        "eval_episodes": cfg.eval_episodes,
        "eval_discount": cfg.eval_discount,
        "eval_gamma": cfg.eval_gamma,
        "seeds": [int(s) for s in cfg.seeds],
        "relative_scale": cfg.relative_scale,
        "evals_per_candidate": cfg.evals_per_candidate,
        "inner": {
            "gamma": cfg.inner.gamma,
            "gae_lambda": cfg.inner.gae_lambda,
            "clip_ratio": cfg.inner.clip_ratio,
            "epochs_per_update": cfg.inner.epochs_per_update,
            "minibatches": cfg.inner.minibatches,
            "learning_rate": cfg.inner.learning_rate,
            "value_coef": cfg.inner.value_coef,
            "entropy_coef": cfg.inner.entropy_coef,
            "steps_per_update": cfg.inner.steps_per_update,
            "total_updates": cfg.inner.total_updates,
            "advantage_normalization": cfg.inner.advantage_normalization,
        },
        "outer": {
            "population_size": cfg.outer.population_size,
            "elite_fraction": cfg.outer.elite_fraction,
            "iterations": cfg.outer.iterations,
            "initial_search_std": std_value(cfg.outer.initial_search_std),
            "noise_floor": cfg.outer.noise_floor,
            "smoothing": cfg.outer.smoothing,
        },
        "sf": {
            "steps": cfg.sf.steps,
            "population": cfg.sf.population,
            "step_size": cfg.sf.step_size,
            "sampling_std": std_value(cfg.sf.sampling_std),
        },
    }
