"""drtune: bilevel tuning of domain-randomization distributions.

Train policies in simulation under a parameterized distribution of
dynamics (inner problem, clipped-surrogate policy optimization) and
optimize the distribution's parameters to maximize the trained policy's
return in a held-out "real" environment (outer problem, cross-entropy
method or score-function gradient).
"""

from . import _env  # noqa: F401  (sets BLAS thread defaults; must precede numpy)
from ._backend import active_backend, have_compiled
from .config import ExperimentConfig, default_config, parse_config_file
from .envsim import EnvSpec, EnvState, MdpParams, make_real_params, make_spec, reset, step
from .harness import evaluate_real, report, run_baseline, run_bilevel, run_experiment
from .outeropt import CemConfig, SfConfig, cem_optimize, sf_gradient, sf_optimize
from .policy import PolicyParams, PolicySpec, init_policy, load_policy, save_policy
from .ppo import PpoConfig, TrajectoryBatch, collect_rollouts, compute_gae, ppo_update, train_inner
from .randdist import Phi, init_phi, log_density, sample_mdp

__version__ = "0.1.0"

__all__ = [
    "CemConfig",
    "EnvSpec",
    "EnvState",
    "ExperimentConfig",
    "MdpParams",
    "Phi",
    "PolicyParams",
    "PolicySpec",
    "PpoConfig",
    "SfConfig",
    "TrajectoryBatch",
    "active_backend",
    "cem_optimize",
    "collect_rollouts",
    "compute_gae",
    "default_config",
    "evaluate_real",
    "have_compiled",
    "init_phi",
    "init_policy",
    "load_policy",
    "log_density",
    "make_real_params",
    "make_spec",
    "parse_config_file",
    "ppo_update",
    "report",
    "reset",
    "run_baseline",
    "run_bilevel",
    "run_experiment",
    "sample_mdp",
    "save_policy",
    "sf_gradient",
    "sf_optimize",
    "step",
    "train_inner",
    "__version__",
]
