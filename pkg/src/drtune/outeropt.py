"""Outer-problem solvers over the randomization-distribution parameters.

Two gradient-free strategies for maximizing a noisy, expensive objective
(the real-environment return of a policy trained under a candidate
distribution):

* cross-entropy method over the flattened (mean, log_std) vector, so the
  search can both shift and widen/narrow the distribution, and
* a score-function (REINFORCE-style) gradient ascent with a mean baseline.

Both track the best candidate ever evaluated and return it, not the final
search mean — a single lucky candidate is a valid answer for a noisy
objective. Population evaluations are independent, so a caller may fan
them out; results are consumed in candidate-index order either way.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import OptimizationFailedError, ProtocolError
from .randdist import LOG_STD_MAX, LOG_STD_MIN, Phi, phi_from_vector, phi_to_vector
from .seeding import rng_from

log = logging.getLogger(__name__)

# Default search spread when none is configured: wider on the mean half of
# the decision vector than on the log-std half.
DEFAULT_MEAN_SEARCH_STD = 0.5
DEFAULT_LOG_STD_SEARCH_STD = 0.3


@dataclass(frozen=True)
class CemConfig:
    population_size: int = 10
    elite_fraction: float = 0.3
    iterations: int = 10
    initial_search_std: object = None  # scalar, vector, or None for the split default
    noise_floor: float = 0.02
    smoothing: float = 0.9

    @property
    def n_elite(self) -> int:
        return math.ceil(self.elite_fraction * self.population_size)

    def validate(self) -> None:
        if self.population_size < 4:
            raise ProtocolError(f"population_size must be >= 4, got {self.population_size}")
        if not (0.0 < self.elite_fraction <= 1.0):
            raise ProtocolError(f"elite_fraction must be in (0, 1], got {self.elite_fraction}")
        if self.n_elite < 2:
            raise ProtocolError("elite count ceil(elite_fraction * N) must be >= 2")
        if self.iterations < 0:
            raise ProtocolError(f"iterations must be >= 0, got {self.iterations}")
        if self.noise_floor < 0.0:
            raise ProtocolError(f"noise_floor must be >= 0, got {self.noise_floor}")
        if not (0.0 < self.smoothing <= 1.0):
            raise ProtocolError(f"smoothing must be in (0, 1], got {self.smoothing}")


@dataclass(frozen=True)
class ScoredCandidate:
    phi_vector: np.ndarray
    score: float


@dataclass
class CemState:
    search_mean: np.ndarray
    search_std: np.ndarray
    iteration: int
    best_vector: np.ndarray
    best_score: float


@dataclass(frozen=True)
class IterationSummary:
    iteration: int
    search_mean: np.ndarray
    search_std: np.ndarray
    best_score: float
    scores: tuple = ()


def initial_search_std(cfg: CemConfig, dim: int) -> np.ndarray:
    """Resolve the configured search spread to a vector over the phi space."""
    raw = cfg.initial_search_std
    if raw is None:
        if dim % 2 != 0:
            raise ProtocolError("default search std needs an even-dimensional phi vector")
        half = dim // 2
        return np.concatenate([
            np.full(half, DEFAULT_MEAN_SEARCH_STD),
            np.full(half, DEFAULT_LOG_STD_SEARCH_STD),
        ])
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise ProtocolError(f"initial_search_std has shape {arr.shape}, expected ({dim},)")
    return arr.copy()


def cem_ask(state: CemState, cfg: CemConfig, rng) -> np.ndarray:
    """Sample the next population; the log-std half of each candidate is
    clamped into the valid Phi range."""
    rng = rng_from(rng)
    dim = state.search_mean.shape[0]
    draws = state.search_mean + state.search_std * rng.standard_normal(
        (cfg.population_size, dim)
    )
    half = dim // 2
    draws[:, half:] = np.clip(draws[:, half:], LOG_STD_MIN, LOG_STD_MAX)
    return draws


def cem_tell(state: CemState, scored: list[ScoredCandidate], cfg: CemConfig) -> CemState:
    """Refit the search distribution to the elite fraction of the population.

    Ties in score break toward the lower candidate index. Failed candidates
    may carry -inf scores; they can never enter the elite set.
    """
    if len(scored) != cfg.population_size:
        raise ProtocolError(
            f"expected {cfg.population_size} scored candidates, got {len(scored)}"
        )
    scores = np.array([c.score for c in scored], dtype=np.float64)
    if np.any(np.isnan(scores)) or np.any(scores == np.inf):
        raise ProtocolError("candidate scores must not be NaN or +inf")

    order = sorted(range(len(scored)), key=lambda i: (-scores[i], i))
    elite_idx = order[: cfg.n_elite]
    if not np.isfinite(scores[elite_idx]).all():
        raise OptimizationFailedError(
            "too many failed candidate evaluations to form an elite set"
        )
    elites = np.stack([scored[i].phi_vector for i in elite_idx])

    alpha = cfg.smoothing
    new_mean = alpha * elites.mean(axis=0) + (1.0 - alpha) * state.search_mean
    new_std = np.maximum(
        alpha * elites.std(axis=0) + (1.0 - alpha) * state.search_std, cfg.noise_floor
    )

    best_vector, best_score = state.best_vector, state.best_score
    top = order[0]
    if scores[top] > best_score:
        best_vector, best_score = scored[top].phi_vector.copy(), float(scores[top])
    return CemState(
        search_mean=new_mean,
        search_std=new_std,
        iteration=state.iteration + 1,
        best_vector=best_vector,
        best_score=best_score,
    )


def _score_population(objective, vectors, population_evaluator, round_index):
    """Evaluate a population, mapping non-finite scores to -inf with a warning."""
    if population_evaluator is not None:
        raw = population_evaluator(round_index, [np.array(v) for v in vectors])
    else:
        raw = [objective(np.array(v)) for v in vectors]
    scores = []
    for i, s in enumerate(raw):
        s = float(s)
        if not math.isfinite(s):
            log.warning("candidate %d of round %d scored non-finite (%r); discarding",
                        i, round_index, s)
            s = -np.inf
        scores.append(s)
    if not any(math.isfinite(s) for s in scores):
        raise OptimizationFailedError(
            f"every candidate in round {round_index} failed to produce a finite score"
        )
    return scores


def cem_optimize(objective, phi0: Phi, cfg: CemConfig, rng, phi0_score: float | None = None,
                 population_evaluator=None, iteration_callback=None):
    """Run K ask/evaluate/tell rounds from the initial distribution phi0.

    Returns (best_phi, trace). The starting point is always scored (or its
    score supplied via `phi0_score`), so a best-so-far answer exists even
    with zero iterations. `population_evaluator(round_index, vectors)`,
    when given, replaces per-candidate `objective` calls; round 0 is the
    phi0 evaluation and rounds 1..K are the populations. Each
    IterationSummary is also passed to `iteration_callback` as produced.
    """
    cfg.validate()
    rng = rng_from(rng)
    v0 = phi_to_vector(phi0)
    if phi0_score is None:
        phi0_score = _score_population(objective, [v0], population_evaluator, 0)[0]
    phi0_score = float(phi0_score)
    if not math.isfinite(phi0_score):
        raise OptimizationFailedError(f"initial candidate scored non-finite: {phi0_score}")

    state = CemState(
        search_mean=v0.copy(),
        search_std=initial_search_std(cfg, v0.shape[0]),
        iteration=0,
        best_vector=v0.copy(),
        best_score=phi0_score,
    )
    trace = [IterationSummary(0, state.search_mean.copy(), state.search_std.copy(),
                              state.best_score, (phi0_score,))]
    if iteration_callback is not None:
        iteration_callback(trace[0])

    for k in range(cfg.iterations):
        vectors = cem_ask(state, cfg, rng)
        scores = _score_population(objective, vectors, population_evaluator, k + 1)
        scored = [ScoredCandidate(vectors[i], scores[i]) for i in range(len(scores))]
        state = cem_tell(state, scored, cfg)
        trace.append(IterationSummary(
            state.iteration, state.search_mean.copy(), state.search_std.copy(),
            state.best_score, tuple(scores),
        ))
        if iteration_callback is not None:
            iteration_callback(trace[-1])
    return phi_from_vector(state.best_vector), trace


# ---------------------------------------------------------------------------
# Score-function (REINFORCE) gradient route
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SfGradient:
    mean: np.ndarray
    log_std: np.ndarray


def sf_gradient(omega_mean, omega_std, samples: list[ScoredCandidate]) -> SfGradient:
    """Baseline-corrected score-function estimate of the smoothed-objective
    gradient at the sampling distribution N(omega_mean, diag(omega_std^2)).

    d/d mean:    (1/N) sum_i ((phi_i - mu) / sigma^2) * (J_i - b)
    d/d log std: (1/N) sum_i ((phi_i - mu)^2 / sigma^2 - 1) * (J_i - b)
    with b the mean of the J_i.
    """
    mu = np.asarray(omega_mean, dtype=np.float64)
    sig = np.asarray(omega_std, dtype=np.float64)
    if mu.shape != sig.shape:
        raise ProtocolError(f"omega mean/std shapes differ: {mu.shape} vs {sig.shape}")
    if len(samples) < 2:
        raise ProtocolError("score-function gradient needs at least 2 samples")
    vectors = np.stack([np.asarray(s.phi_vector, dtype=np.float64) for s in samples])
    if vectors.shape[1] != mu.shape[0]:
        raise ProtocolError(
            f"sample dimension {vectors.shape[1]} does not match omega dimension {mu.shape[0]}"
        )
    scores = np.array([s.score for s in samples], dtype=np.float64)
    centered = scores - scores.mean()
    dev = vectors - mu
    grad_mean = ((dev / (sig * sig)) * centered[:, None]).mean(axis=0)
    grad_log_std = (((dev * dev) / (sig * sig) - 1.0) * centered[:, None]).mean(axis=0)
    return SfGradient(mean=grad_mean, log_std=grad_log_std)


@dataclass(frozen=True)
class SfConfig:
    steps: int = 10
    population: int = 10
    step_size: float = 0.1
    sampling_std: object = None  # scalar, vector, or None for the split default

    def validate(self) -> None:
        if self.steps < 0:
            raise ProtocolError(f"steps must be >= 0, got {self.steps}")
        if self.population < 2:
            raise ProtocolError(f"population must be >= 2, got {self.population}")
        if self.step_size < 0.0:
            raise ProtocolError(f"step_size must be >= 0, got {self.step_size}")


def sf_optimize(objective, phi0: Phi, steps: int, step_size: float, population: int,
                sampling_std, rng, population_evaluator=None, iteration_callback=None):
    """Plain gradient ascent on the mean of the sampling distribution, with
    fixed sampling spread. Returns (best_phi, trace) like cem_optimize."""
    SfConfig(steps=steps, population=population, step_size=step_size).validate()
    rng = rng_from(rng)
    omega = phi_to_vector(phi0)
    dim = omega.shape[0]
    sig = initial_search_std(CemConfig(initial_search_std=sampling_std), dim)

    best_score = _score_population(objective, [omega], population_evaluator, 0)[0]
    best_vector = omega.copy()
    trace = [IterationSummary(0, omega.copy(), sig.copy(), best_score, (best_score,))]
    if iteration_callback is not None:
        iteration_callback(trace[0])

    half = dim // 2
    for k in range(steps):
        draws = omega + sig * rng.standard_normal((population, dim))
        draws[:, half:] = np.clip(draws[:, half:], LOG_STD_MIN, LOG_STD_MAX)
        scores = _score_population(objective, draws, population_evaluator, k + 1)
        finite = [i for i, s in enumerate(scores) if math.isfinite(s)]
        if len(finite) < 2:
            raise OptimizationFailedError(
                f"round {k + 1} produced fewer than 2 finite scores"
            )
        samples = [ScoredCandidate(draws[i], scores[i]) for i in finite]
        grad = sf_gradient(omega, sig, samples)
        omega = omega + step_size * grad.mean
        omega[half:] = np.clip(omega[half:], LOG_STD_MIN, LOG_STD_MAX)
        top = max(finite, key=lambda i: (scores[i], -i))
        if scores[top] > best_score:
            best_score = float(scores[top])
            best_vector = draws[top].copy()
        trace.append(IterationSummary(k + 1, omega.copy(), sig.copy(), best_score,
                                      tuple(scores)))
        if iteration_callback is not None:
            iteration_callback(trace[-1])
    return phi_from_vector(best_vector), trace
