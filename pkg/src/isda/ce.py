"""Distributed cross-entropy policy search.

Every terminal owns a diagonal Gaussian over its network parameters.  In each
evaluation iteration the terminals draw fresh parameters for each of
``M_fb`` episodes, the receiver ranks the episodes by weighted cost and
broadcasts the indices of the best ``floor(rho * M_fb)``, and each terminal
refits its own Gaussian to its own samples at those indices.  A decaying
noise term ``z0 / (m + 1)`` is added to the refitted variances.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .mac import EVAL_STREAM, TRAIN_STREAM, Scenario, run_episodes, stream

log = logging.getLogger(__name__)


@dataclass
class ParamDistribution:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape or self.mean.ndim != 1:
            raise ValueError("mean and variance must be vectors of equal length")
        if np.any(self.variance < 0):
            raise ValueError("variances must be nonnegative")

    @classmethod
    def isotropic(cls, length: int, mean: float = 0.0, variance: float = 1.0):
        return cls(np.full(length, float(mean)), np.full(length, float(variance)))

    def __len__(self):
        return self.mean.size


@dataclass(frozen=True)
class CeHyperparams:
    episode_length: int = 100
    episodes_per_iteration: int = 100
    elite_fraction: float = 0.1
    initial_noise: float = 0.5
    iterations: int = 150
    init_mean: float = 0.0
    init_variance: float = 1.0
    eval_episodes: int = 100

    def __post_init__(self):
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if self.episodes_per_iteration < 1:
            raise ValueError("episodes_per_iteration must be >= 1")
        if not 0 < self.elite_fraction <= 1:
            raise ValueError(f"elite_fraction must be in (0, 1], got {self.elite_fraction}")
        if self.n_elites < 1:
            raise ValueError(
                f"elite_fraction * episodes_per_iteration = "
                f"{self.elite_fraction * self.episodes_per_iteration} selects no episode")
        if self.initial_noise < 0:
            raise ValueError("initial_noise must be nonnegative")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.init_variance < 0:
            raise ValueError("init_variance must be nonnegative")
        if self.eval_episodes < 0:
            raise ValueError("eval_episodes must be nonnegative")

    @property
    def n_elites(self) -> int:
        return elite_count(self.episodes_per_iteration, self.elite_fraction)


@dataclass
class IterationRecord:
    iteration: int
    mean_sampled_cost: float
    elite_mean_cost: float
    eval_cost: float
    eval_metrics: np.ndarray
    minislots: int = 0


@dataclass
class TrainingTrace:
    records: List[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def elite_count(n_episodes: int, rho: float) -> int:
    # tolerate representation error such as 0.1 * 100 = 10.000000000000002
    return int(math.floor(rho * n_episodes + 1e-9))


def noise_level(z0: float, m: int) -> float:
    """Extra variance added by the update that follows iteration ``m``."""
    return z0 / (m + 1)


def sample_params(dist: ParamDistribution, rng: np.random.Generator, size: Optional[int] = None):
    shape = dist.mean.shape if size is None else (size,) + dist.mean.shape
    return dist.mean + np.sqrt(dist.variance) * rng.standard_normal(shape)


def select_elites(costs, rho: float) -> np.ndarray:
    """Indices of the ``floor(rho * M)`` lowest costs, ties to the lower index."""
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 1 or costs.size < 1:
        raise ValueError("need a non-empty cost vector")
    k = elite_count(costs.size, rho)
    if k < 1:
        raise ValueError(f"rho={rho} selects no episode out of {costs.size}")
    return np.sort(np.argsort(costs, kind="stable")[:k])


def update_distribution(dist: ParamDistribution, elite_params, z0: float, m: int) -> ParamDistribution:
    elites = np.asarray(elite_params, dtype=np.float64)
    if elites.ndim != 2 or elites.shape[0] < 1:
        raise ValueError("need at least one elite parameter vector")
    if elites.shape[1] != len(dist):
        raise ValueError(f"elite vectors have length {elites.shape[1]}, distribution has {len(dist)}")
    mean = elites.mean(axis=0)
    var = ((elites - mean) ** 2).mean(axis=0) + noise_level(z0, m)
    return ParamDistribution(mean, var)


# evaluate(samples, env_rngs, iteration) -> episode costs
Evaluator = Callable[[Sequence[np.ndarray], Sequence[np.random.Generator], int], np.ndarray]


def cross_entropy(evaluate: Evaluator, dists: Sequence[ParamDistribution], hp: CeHyperparams,
                  seed: int, on_iteration: Optional[Callable] = None):
    """Generic decentralized CE loop over an arbitrary episode evaluator.

    Episode ``e`` of iteration ``m`` draws every terminal's parameters and
    its environment randomness from the stream keyed ``(seed, 0, m, e)``.
    ``on_iteration(m, dists, costs, elites)`` is called after each update and
    may return a value that is collected into the returned list.
    """
    dists = list(dists)
    n_agents = len(dists)
    extras = []
    for m in range(1, hp.iterations + 1):
        samples = [np.empty((hp.episodes_per_iteration, len(d))) for d in dists]
        env_rngs = []
        for e in range(hp.episodes_per_iteration):
            children = np.random.SeedSequence(int(seed), spawn_key=(TRAIN_STREAM, m, e)).spawn(n_agents + 1)
            for j, d in enumerate(dists):
                samples[j][e] = sample_params(d, np.random.default_rng(children[j]))
            env_rngs.append(np.random.default_rng(children[n_agents]))
        costs = np.asarray(evaluate(samples, env_rngs, m), dtype=np.float64)
        if not np.all(np.isfinite(costs)):
            raise FloatingPointError(f"non-finite episode cost in iteration {m}")
        elites = select_elites(costs, hp.elite_fraction)
        # each terminal only needs its own samples and the broadcast index set
        dists = [update_distribution(d, s[elites], hp.initial_noise, m) for d, s in zip(dists, samples)]
        if on_iteration is not None:
            extras.append(on_iteration(m, dists, costs, elites))
    return dists, extras


@dataclass
class TrainResult:
    distributions: List[ParamDistribution]
    trace: TrainingTrace

    @property
    def mean_policy(self) -> List[np.ndarray]:
        return [d.mean.copy() for d in self.distributions]


def evaluate_policy(scenario: Scenario, policy: Sequence[np.ndarray], n_episodes: int, n_slots: int,
                    seed: int, iteration: int, *, hidden_dim: int = 5, norm: float = 10.0,
                    workers: int = 1):
    """Mean per-terminal cost of a fixed policy over fresh evaluation episodes."""
    rngs = [stream(seed, EVAL_STREAM, iteration, j) for j in range(n_episodes)]
    params = [np.repeat(np.asarray(p, dtype=np.float64)[None], n_episodes, axis=0) for p in policy]
    avg, w, mini, _ = run_episodes(scenario, params, n_slots, rngs, hidden_dim=hidden_dim,
                                   norm=norm, workers=workers)
    return avg.mean(axis=0), float(w.mean()), int(mini.sum())


def train(scenario: Scenario, hp: CeHyperparams, seed: int, *, hidden_dim: int = 5,
          norm: float = 10.0, workers: int = 1, progress: Optional[Callable] = None) -> TrainResult:
    shapes = scenario.net_shapes(hidden_dim)
    dists = [ParamDistribution.isotropic(s.param_count, hp.init_mean, hp.init_variance) for s in shapes]
    minislots = {}

    def evaluate(samples, env_rngs, m):
        avg, w, mini, _ = run_episodes(scenario, samples, hp.episode_length, env_rngs,
                                       hidden_dim=hidden_dim, norm=norm, workers=workers)
        minislots[m] = int(mini.sum())
        return w

    def record(m, new_dists, costs, elites):
        if hp.eval_episodes:
            metrics, eval_cost, _ = evaluate_policy(
                scenario, [d.mean for d in new_dists], hp.eval_episodes, hp.episode_length,
                seed, m, hidden_dim=hidden_dim, norm=norm, workers=workers)
        else:
            metrics, eval_cost = np.full(scenario.n_terminals, np.nan), math.nan
        rec = IterationRecord(iteration=m, mean_sampled_cost=float(costs.mean()),
                              elite_mean_cost=float(costs[elites].mean()), eval_cost=eval_cost,
                              eval_metrics=metrics, minislots=minislots.pop(m))
        log.debug("iteration %d: sampled %.3f elite %.3f eval %.3f", m, rec.mean_sampled_cost,
                  rec.elite_mean_cost, rec.eval_cost)
        if progress is not None:
            progress(rec)
        return rec

    final, records = cross_entropy(evaluate, dists, hp, seed, on_iteration=record)
    return TrainResult(distributions=final, trace=TrainingTrace(records))
