"""Throughput benchmark: compiled rollout kernels vs the python fallback.

Run as `python -m drtune.benchmark [--env cartpole] [--steps 50000]`.
Times the two hot loops (batch collection and evaluation rollouts) on both
backends and prints a speedup summary, plus a numerical agreement check on
a short rollout.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from . import _backend
from .envsim import make_spec
from .policy import PolicySpec, init_policy
from .ppo import PpoConfig, collect_rollouts
from .randdist import init_phi
from .harness import rollout_returns


def _time_collect(spec, params, phi, cfg, backend, repeats=3):
    best = float("inf")
    for r in range(repeats):
        t0 = time.perf_counter()
        collect_rollouts(params, phi, spec, cfg, (123, r), backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def _time_eval(spec, params, episodes, backend, repeats=3):
    best = float("inf")
    for r in range(repeats):
        t0 = time.perf_counter()
        rollout_returns(params, spec, spec.nominal_params, episodes, 1.0, (77, r),
                        backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--env", default="cartpole", choices=("cartpole", "pointmass"))
    parser.add_argument("--steps", type=int, default=50_000, help="rollout batch size")
    parser.add_argument("--episodes", type=int, default=100, help="evaluation episodes")
    args = parser.parse_args(argv)

    spec = make_spec(args.env)
    params = init_policy(PolicySpec(spec.state_dim, spec.action_dim), 0)
    phi = init_phi(spec.nominal_params)
    cfg = PpoConfig(steps_per_update=args.steps, minibatches=1)

    backends = ["python"] + (["compiled"] if _backend.have_compiled() else [])
    if len(backends) == 1:
        print("compiled kernels unavailable; timing the python fallback only")

    print(f"env={args.env} steps={args.steps} eval_episodes={args.episodes}")
    collect_times, eval_times = {}, {}
    for b in backends:
        collect_times[b] = _time_collect(spec, params, phi, cfg, b)
        eval_times[b] = _time_eval(spec, params, args.episodes, b)
        print(f"{b:>9}: collect {args.steps / collect_times[b]:>12,.0f} steps/s   "
              f"eval {args.episodes * spec.horizon / eval_times[b]:>12,.0f} steps/s")

    if len(backends) == 2:
        print(f"speedup: collect x{collect_times['python'] / collect_times['compiled']:.1f}, "
              f"eval x{eval_times['python'] / eval_times['compiled']:.1f}")
        short = PpoConfig(steps_per_update=512, minibatches=1)
        a = collect_rollouts(params, phi, spec, short, 5, backend="python")
        b = collect_rollouts(params, phi, spec, short, 5, backend="compiled")
        drift = max(
            float(np.max(np.abs(a.observations - b.observations))),
            float(np.max(np.abs(a.rewards - b.rewards))),
            float(np.max(np.abs(a.log_probs - b.log_probs))),
        )
        print(f"max backend disagreement over a 512-step rollout: {drift:.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
