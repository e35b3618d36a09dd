"""Experiment orchestration: baseline runs, bilevel optimization, reporting.

The bilevel experiment composes the pieces: the outer optimizer proposes
candidate randomization distributions, each candidate trains a fresh policy
(inner problem) and is scored by its mean return in the held-out "real"
environment, and the improvement of the best candidate over the
initial-distribution baseline is the headline statistic.

Everything is a deterministic function of the config and the master seed:
candidate evaluations derive their streams from (master_seed, round,
candidate_index, replicate), so results are identical whether candidates
run serially or on a worker pool.
"""

from __future__ import annotations

import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .config import ExperimentConfig, config_snapshot
from .envsim import EnvSpec, MdpParams, make_real_params, make_spec
from .errors import RecordParseError, TrainingDivergedError
from .outeropt import cem_optimize, sf_optimize
from .policy import PolicyParams
from .ppo import train_inner
from .randdist import Phi, init_phi, phi_from_vector, phi_to_vector
from .records import RecordWriter, read_records
from .seeding import TAG_CANDIDATE, TAG_EVAL, TAG_OUTER, rng_from, seed_key


# ---------------------------------------------------------------------------
# Real-environment evaluation
# ---------------------------------------------------------------------------

def rollout_returns(params: PolicyParams, spec: EnvSpec, m: MdpParams, episodes: int,
                    gamma: float, seed, backend: str | None = None) -> np.ndarray:
    """Per-episode returns with stochastic actions; episode noise is a
    deterministic slice of one stream derived from `seed`."""
    rng = rng_from(seed)
    reset_u = rng.uniform(-1.0, 1.0, (episodes, spec.state_dim))
    action_z = rng.standard_normal((episodes, spec.horizon, spec.action_dim))
    return _backend.eval_episodes(spec, params, m.values, reset_u, action_z, gamma, backend)


def evaluate_real(params: PolicyParams, spec: EnvSpec, m_real: MdpParams, episodes: int,
                  discount: str = "undiscounted", gamma: float = 0.99, seed=0,
                  backend: str | None = None):
    """Mean and standard error of the policy's return in the real environment."""
    g = 1.0 if discount == "undiscounted" else float(gamma)
    returns = rollout_returns(params, spec, m_real, episodes, g, seed, backend)
    mean = float(np.mean(returns))
    stderr = float(np.std(returns, ddof=1) / math.sqrt(episodes)) if episodes > 1 else 0.0
    return mean, stderr


# ---------------------------------------------------------------------------
# Candidate evaluation (shared by baseline, serial, and pooled paths)
# ---------------------------------------------------------------------------

@dataclass
class CandidateResult:
    round_index: int
    cand_index: int
    phi: Phi
    score: float  # -inf if every replicate diverged
    eval_stderr: float
    curves: list
    diverged: bool


def _evaluate_candidate(config: ExperimentConfig, master_key: tuple, round_index: int,
                        cand_index: int, vector: np.ndarray,
                        return_policy: bool = False):
    """Train and score one candidate distribution. Divergence of the inner
    solver discards the replicate instead of killing the experiment."""
    spec = make_spec(config.env_id)
    m_real = make_real_params(spec, config.real_gap_multipliers)
    phi = phi_from_vector(vector)
    scores, stderrs, curves = [], [], []
    policy = None
    diverged = False
    for rep in range(config.evals_per_candidate):
        curve = []
        try:
            policy = train_inner(
                phi, spec, config.inner,
                master_key + (TAG_CANDIDATE, round_index, cand_index, rep),
                update_callback=lambda k, stats: curve.append(stats["mean_episode_return"]),
            )
        except TrainingDivergedError:
            diverged = True
            curves.append(curve)
            continue
        mean, stderr = evaluate_real(
            policy, spec, m_real, config.eval_episodes, config.eval_discount,
            config.eval_gamma, master_key + (TAG_EVAL, round_index, cand_index, rep),
        )
        scores.append(mean)
        stderrs.append(stderr)
        curves.append(curve)
    if scores:
        score = float(np.mean(scores))
        stderr = float(np.mean(stderrs))
    else:
        score, stderr = float("-inf"), 0.0
    result = CandidateResult(round_index, cand_index, phi, score, stderr, curves, diverged)
    return (result, policy) if return_policy else result


def _candidate_task(args):
    config, master_key, round_index, cand_index, vector = args
    return _evaluate_candidate(config, master_key, round_index, cand_index, vector)


class _PopulationEvaluator:
    """Scores one population, fanning candidates out to a worker pool when
    available; records are written in candidate-index order afterwards."""

    def __init__(self, config: ExperimentConfig, master_key: tuple, writer, pool, seed):
        self.config = config
        self.master_key = master_key
        self.writer = writer
        self.pool = pool
        self.seed = seed

    def __call__(self, round_index: int, vectors):
        tasks = [
            (self.config, self.master_key, round_index, i, np.asarray(v))
            for i, v in enumerate(vectors)
        ]
        if self.pool is not None:
            results = list(self.pool.map(_candidate_task, tasks))
        else:
            results = [_candidate_task(t) for t in tasks]
        scores = []
        for res in results:
            failed = not math.isfinite(res.score)
            if self.writer is not None:
                self.writer.write({
                    "type": "candidate",
                    "seed": self.seed,
                    "iteration": res.round_index,
                    "index": res.cand_index,
                    "phi_mean": res.phi.mean,
                    "phi_log_std": res.phi.log_std,
                    "score": None if failed else res.score,
                    "eval_stderr": res.eval_stderr,
                    "failed": failed,
                    "curves": res.curves,
                })
            scores.append(res.score)
        return scores


# ---------------------------------------------------------------------------
# Top-level runs
# ---------------------------------------------------------------------------

@dataclass
class BaselineResult:
    policy: PolicyParams
    score: float
    stderr: float
    curve: list
    phi: Phi


def run_baseline(config: ExperimentConfig, seed, writer=None) -> BaselineResult:
    """Train and score the policy for the initial distribution phi0."""
    config.validate()
    master_key = seed_key(seed)
    spec = make_spec(config.env_id)
    phi0 = init_phi(spec.nominal_params, config.relative_scale)
    result, policy = _evaluate_candidate(
        config, master_key, 0, 0, phi_to_vector(phi0), return_policy=True
    )
    if not math.isfinite(result.score):
        raise TrainingDivergedError(
            f"baseline training diverged for seed {seed}", update_index=None
        )
    if writer is not None:
        writer.write({
            "type": "baseline",
            "seed": _seed_label(seed),
            "phi_mean": phi0.mean,
            "phi_log_std": phi0.log_std,
            "score": result.score,
            "eval_stderr": result.eval_stderr,
            "curves": result.curves,
        })
    curve = result.curves[0] if result.curves else []
    return BaselineResult(policy=policy, score=result.score, stderr=result.eval_stderr,
                          curve=curve, phi=phi0)


@dataclass
class SeedOutcome:
    seed: int
    baseline_score: float
    optimized_score: float
    improvement_ratio: float | None  # None when baseline <= 0
    improvement_abs: float
    best_phi: Phi
    trace: list


def _seed_label(seed) -> int:
    key = seed_key(seed)
    return key[0] if len(key) == 1 else list(key)


def _improvement(baseline: float, optimized: float):
    diff = optimized - baseline
    if baseline > 0.0:
        return diff / baseline, diff
    return None, diff


def run_bilevel(config: ExperimentConfig, seed, writer=None, pool=None) -> SeedOutcome:
    """One full bilevel experiment for one master seed: baseline at phi0,
    then the configured outer optimizer over the phi space."""
    config.validate()
    master_key = seed_key(seed)
    baseline = run_baseline(config, seed, writer)

    evaluator = _PopulationEvaluator(config, master_key, writer, pool, _seed_label(seed))
    on_iteration = None
    if writer is not None:
        def on_iteration(summary):
            writer.write({
                "type": "iteration",
                "seed": _seed_label(seed),
                "iteration": summary.iteration,
                "search_mean": summary.search_mean,
                "search_std": summary.search_std,
                "best_score": summary.best_score,
            })

    outer_rng = master_key + (TAG_OUTER,)
    if config.outer_method == "cem":
        best_phi, trace = cem_optimize(
            None, baseline.phi, config.outer, outer_rng, phi0_score=baseline.score,
            population_evaluator=evaluator, iteration_callback=on_iteration,
        )
    else:
        best_phi, trace = sf_optimize(
            None, baseline.phi, config.sf.steps, config.sf.step_size,
            config.sf.population, config.sf.sampling_std, outer_rng,
            population_evaluator=evaluator, iteration_callback=on_iteration,
        )
    optimized = trace[-1].best_score
    ratio, diff = _improvement(baseline.score, optimized)
    outcome = SeedOutcome(
        seed=_seed_label(seed),
        baseline_score=baseline.score,
        optimized_score=optimized,
        improvement_ratio=ratio,
        improvement_abs=diff,
        best_phi=best_phi,
        trace=trace,
    )
    if writer is not None:
        writer.write({
            "type": "seed_summary",
            "seed": outcome.seed,
            "baseline": outcome.baseline_score,
            "optimized": outcome.optimized_score,
            "improvement_ratio": outcome.improvement_ratio,
            "improvement_abs": outcome.improvement_abs,
            "relative": outcome.improvement_ratio is not None,
            "best_phi_mean": best_phi.mean,
            "best_phi_log_std": best_phi.log_std,
        })
    return outcome


@dataclass
class ExperimentSummary:
    record_path: str
    outcomes: list


def run_experiment(config: ExperimentConfig, output_path=None, seeds=None) -> ExperimentSummary:
    """Run the bilevel experiment over all seeds, streaming records to disk.

    Candidate evaluations always run in spawned worker processes (even with
    parallel_candidates = 1), so record files are byte-identical across
    worker counts: every candidate is computed in the same kind of process
    either way. Partial results are flushed per line, so a failed run
    leaves every completed round on disk before the error propagates.
    """
    config.validate()
    path = str(output_path or config.output_path)
    seed_list = list(seeds) if seeds is not None else list(config.seeds)
    pool = None
    outcomes = []
    writer = RecordWriter(path, config_snapshot(config))
    t_start = time.monotonic()
    try:
        pool = ProcessPoolExecutor(
            max_workers=config.parallel_candidates,
            mp_context=multiprocessing.get_context("spawn"),
        )
        for seed in seed_list:
            t_seed = time.monotonic()
            outcome = run_bilevel(config, seed, writer, pool)
            outcomes.append(outcome)
            writer.write({
                "type": "timing",
                "seed": outcome.seed,
                "seconds": time.monotonic() - t_seed,
            })
        writer.write({
            "type": "timing",
            "total_seconds": time.monotonic() - t_start,
            "parallel_candidates": config.parallel_candidates,
            "output_path": path,
            "backend": _backend.active_backend(),
        })
    finally:
        writer.close()
        if pool is not None:
            pool.shutdown()
    return ExperimentSummary(record_path=path, outcomes=outcomes)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def improvement_stats(ratios: list[float]) -> dict:
    """Mean / sample std / min of improvement ratios (as fractions)."""
    arr = np.asarray(ratios, dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else None,
        "min": float(arr.min()),
        "n": int(arr.size),
    }


def _format_improvement(rec) -> str:
    if rec.get("relative"):
        return f"{100.0 * rec['improvement_ratio']:+.1f}%"
    return f"{rec['improvement_abs']:+.3f} (abs)"


def report(record_path, plot_path=None) -> str:
    """Summarize a record file as an aligned text table and write the
    best-so-far-vs-iteration plot data (two-column numeric text)."""
    records = read_records(record_path)
    summaries = [r for r in records if r.get("type") == "seed_summary"]
    if not summaries:
        raise RecordParseError(f"{record_path}: no seed summaries in record file")

    lines = []
    header = f"{'seed':>6}  {'baseline':>12}  {'optimized':>12}  {'improvement':>14}"
    lines.append(header)
    lines.append("-" * len(header))
    for rec in summaries:
        lines.append(
            f"{rec['seed']!s:>6}  {rec['baseline']:>12.3f}  {rec['optimized']:>12.3f}  "
            f"{_format_improvement(rec):>14}"
        )

    if all(r.get("relative") for r in summaries):
        stats = improvement_stats([r["improvement_ratio"] for r in summaries])
        std_text = "n/a" if stats["std"] is None else f"{100.0 * stats['std']:.1f}%"
        lines.append(
            f"improvement over {stats['n']} seed(s): "
            f"mean {100.0 * stats['mean']:.1f}%  std {std_text}  min {100.0 * stats['min']:.1f}%"
        )
    else:
        diffs = [r["improvement_abs"] for r in summaries]
        stats = improvement_stats(diffs)
        std_text = "n/a" if stats["std"] is None else f"{stats['std']:.3f}"
        lines.append(
            f"absolute improvement over {stats['n']} seed(s): "
            f"mean {stats['mean']:.3f}  std {std_text}  min {stats['min']:.3f}"
        )

    # Best-so-far curve: mean across seeds per outer iteration.
    by_iteration: dict[int, list[float]] = {}
    for rec in records:
        if rec.get("type") == "iteration":
            by_iteration.setdefault(int(rec["iteration"]), []).append(float(rec["best_score"]))
    if by_iteration:
        if plot_path is None:
            base, _ = os.path.splitext(str(record_path))
            plot_path = base + "_curve.txt"
        with open(plot_path, "w", encoding="utf-8") as fh:
            for it in sorted(by_iteration):
                fh.write(f"{it} {np.mean(by_iteration[it]):.6f}\n")
        lines.append(f"best-so-far curve written to {plot_path}")
    return "\n".join(lines)
