"""Slotted random access with contention mini-slots.

Each data slot is preceded by up to ``K`` contention mini-slots.  In every
mini-slot each eligible, still-silent terminal signals with its own
probability.  The first mini-slot in which anyone signals ends the
contention: a single signaller transmits successfully, several signallers
collide in the data slot, and everyone else defers.  If nobody signals in
``K`` mini-slots the slot is idle.  ACK/NACK feedback is error-free.

Random streams are keyed by ``(seed, namespace, ...)`` through
:class:`numpy.random.SeedSequence`, so every episode owns an independent
stream and results do not depend on evaluation order or worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .model import InnerState, TerminalConfig, TerminalKind, can_transmit
from .policy import NetShape, pack_policies

TRAIN_STREAM, EVAL_STREAM, LONG_RUN_STREAM, BASELINE_STREAM = 0, 1, 2, 3
LONG_RUN_CHUNK = 10_000


@dataclass(frozen=True)
class MacConfig:
    data_slot_ms: float = 1.0
    mini_slot_ms: float = 0.25
    mini_slot_count: int = 3
    count_overhead_in_time: bool = False

    def __post_init__(self):
        if not self.data_slot_ms > 0:
            raise ValueError(f"data_slot_ms must be positive, got {self.data_slot_ms}")
        if not self.mini_slot_ms > 0:
            raise ValueError(f"mini_slot_ms must be positive, got {self.mini_slot_ms}")
        if int(self.mini_slot_count) != self.mini_slot_count or self.mini_slot_count < 1:
            raise ValueError(f"mini_slot_count must be a positive integer, got {self.mini_slot_count}")

    def elapsed_ms(self, n_slots: int, minislots: int = 0) -> float:
        """Wall-clock time of ``n_slots`` data slots that consumed ``minislots``."""
        ms = n_slots * self.data_slot_ms
        if self.count_overhead_in_time:
            ms += minislots * self.mini_slot_ms
        return ms


@dataclass(frozen=True)
class Scenario:
    terminals: tuple
    mac: MacConfig = field(default_factory=MacConfig)

    def __post_init__(self):
        object.__setattr__(self, "terminals", tuple(self.terminals))
        if not self.terminals:
            raise ValueError("a scenario needs at least one terminal")
        if all(t.weight == 0 for t in self.terminals):
            raise ValueError("terminal weights must not all be zero")

    @property
    def n_terminals(self) -> int:
        return len(self.terminals)

    @property
    def kinds(self) -> np.ndarray:
        return np.array([int(t.kind) for t in self.terminals], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.terminals], dtype=np.float64)

    @property
    def data_rates(self) -> np.ndarray:
        return np.array([0.0 if t.kind is TerminalKind.IDT_EH else t.data_arrival_rate
                         for t in self.terminals])

    @property
    def energy_rates(self) -> np.ndarray:
        return np.array([t.energy_arrival_rate or 0.0 for t in self.terminals])

    @property
    def capacities(self) -> np.ndarray:
        return np.array([t.energy_capacity or 0 for t in self.terminals], dtype=np.int64)

    def net_shapes(self, hidden_dim: int = 5) -> list:
        return [NetShape(input_dim=t.input_dim, hidden_dim=hidden_dim) for t in self.terminals]

    def kernel_state(self, n_episodes: int = 1):
        """Initial ``(s0, s1)`` kernel arrays, one row per episode."""
        s0 = np.zeros((n_episodes, self.n_terminals), dtype=np.int64)
        s1 = np.zeros((n_episodes, self.n_terminals), dtype=np.int64)
        kinds = self.kinds
        s1[:, kinds == kernels.AOI] = 1
        s0[:, kinds == kernels.IDT_EH] = 1
        return s0, s1


@dataclass(frozen=True)
class ContentionOutcome:
    kind: str
    terminals: frozenset = frozenset()

    @classmethod
    def idle(cls) -> "ContentionOutcome":
        return cls("idle")

    @classmethod
    def success(cls, i: int) -> "ContentionOutcome":
        return cls("success", frozenset([int(i)]))

    @classmethod
    def collision(cls, members) -> "ContentionOutcome":
        members = frozenset(int(i) for i in members)
        if len(members) < 2:
            raise ValueError("a collision involves at least two terminals")
        return cls("collision", members)

    @classmethod
    def from_winners(cls, winners) -> "ContentionOutcome":
        idx = np.flatnonzero(winners)
        if idx.size == 0:
            return cls.idle()
        if idx.size == 1:
            return cls.success(idx[0])
        return cls.collision(idx)

    @property
    def winner(self) -> Optional[int]:
        return next(iter(self.terminals)) if self.kind == "success" else None


@dataclass
class EpisodeRecord:
    per_terminal_avg_cost: np.ndarray
    weighted_cost: float
    minislots: int = 0
    outcomes: Optional[np.ndarray] = None


@dataclass
class LongRunResult:
    per_terminal_avg_cost: np.ndarray
    n_slots: int
    minislots: int
    outcomes: np.ndarray
    elapsed_ms: float
    scheduled: Optional[np.ndarray] = None

    @property
    def ms_per_slot(self) -> float:
        return self.elapsed_ms / self.n_slots


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def draw_uniforms(rng: np.random.Generator, n_slots: int, n_terminals: int, n_mini: int):
    """Per-slot uniforms for data arrivals, energy arrivals and contention."""
    u_data = rng.random((n_slots, n_terminals))
    u_energy = rng.random((n_slots, n_terminals))
    u_cont = rng.random((n_slots, n_mini, n_terminals))
    return u_data, u_energy, u_cont


def weighted_cost(per_terminal_avg_cost, weights) -> float:
    avg = np.asarray(per_terminal_avg_cost, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if avg.shape != w.shape:
        raise ValueError(f"cost vector {avg.shape} and weights {w.shape} differ in length")
    return float(avg @ w)


def contention_round(probs, eligible, n_mini: int, rng: np.random.Generator) -> ContentionOutcome:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("contention needs a non-empty probability vector")
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError(f"probabilities must lie in [0, 1], got {probs}")
    eligible = np.asarray(eligible, dtype=bool)
    u = rng.random((1, n_mini, probs.size))
    winners, _ = kernels.resolve_contention(u, probs[None], eligible[None])
    return ContentionOutcome.from_winners(winners[0])


def run_slot(states: Sequence[InnerState], probs, rng: np.random.Generator, n_mini: int = 3):
    """One contention period plus data slot.

    Returns ``(delivered, transmitted, outcome)``; the boolean vectors are the
    per-terminal ACK and "transmitted in the data slot" flags.
    """
    eligible = [can_transmit(s) for s in states]
    outcome = contention_round(probs, eligible, n_mini, rng)
    n = len(states)
    transmitted = np.zeros(n, dtype=bool)
    transmitted[list(outcome.terminals)] = True
    delivered = transmitted if outcome.kind == "success" else np.zeros(n, dtype=bool)
    return delivered, transmitted, outcome


def _policy_arrays(scenario: Scenario, params, hidden_dim: int, n_episodes: int):
    shapes = scenario.net_shapes(hidden_dim)
    batches = [np.asarray(p, dtype=np.float64).reshape(n_episodes, -1) for p in params]
    for j, (b, s) in enumerate(zip(batches, shapes)):
        if b.shape[1] != s.param_count:
            raise ValueError(
                f"terminal {j} ({scenario.terminals[j].kind.label}) needs {s.param_count} "
                f"parameters, got {b.shape[1]}")
    return pack_policies(batches, shapes)


def _run_chunk(scenario, policy, norm, rngs, n_slots):
    n, k = scenario.n_terminals, scenario.mac.mini_slot_count
    draws = [draw_uniforms(r, n_slots, n, k) for r in rngs]
    u_data = np.stack([d[0] for d in draws])
    u_energy = np.stack([d[1] for d in draws])
    u_cont = np.stack([d[2] for d in draws])
    s0, s1 = scenario.kernel_state(len(rngs))
    return kernels.simulate(scenario.kinds, scenario.data_rates, scenario.energy_rates,
                            scenario.capacities, policy, norm, u_data, u_energy, u_cont, s0, s1)


def run_episodes(scenario: Scenario, params, n_slots: int, rngs: Sequence[np.random.Generator],
                 *, hidden_dim: int = 5, norm: float = 10.0, workers: int = 1):
    """Simulate ``len(rngs)`` independent episodes from the initial state.

    ``params`` is either a list with one ``(M, L_n)`` batch per terminal or,
    for fixed-probability policies, an ``(M, N)``/``(N,)`` array passed as
    ``np.ndarray`` (not a list).  Returns
    ``(avg_cost (M, N), weighted (M,), minislots (M,), outcomes (M, 3))``.
    """
    if n_slots < 1:
        raise ValueError("episodes need at least one slot")
    n_ep = len(rngs)
    if isinstance(params, np.ndarray):
        policy = np.broadcast_to(params, (n_ep, scenario.n_terminals))
    else:
        policy = _policy_arrays(scenario, params, hidden_dim, n_ep)
    bounds = np.linspace(0, n_ep, max(1, min(int(workers), n_ep)) + 1).astype(int)
    parts = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def job(span):
        lo, hi = span
        sub = tuple(a[lo:hi] for a in policy) if isinstance(policy, tuple) else policy[lo:hi]
        return _run_chunk(scenario, sub, norm, rngs[lo:hi], n_slots)

    if len(parts) == 1:
        results = [job(parts[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            results = list(pool.map(job, parts))
    cost_sum = np.concatenate([r[0] for r in results])
    minislots = np.concatenate([r[1] for r in results])
    outcomes = np.concatenate([r[2] for r in results])
    avg = cost_sum / n_slots
    return avg, avg @ scenario.weights, minislots, outcomes


def run_episode(scenario: Scenario, policy_bundle, n_slots: int, rng: np.random.Generator,
                *, hidden_dim: int = 5, norm: float = 10.0) -> EpisodeRecord:
    """One episode with one flat parameter vector per terminal."""
    if len(policy_bundle) != scenario.n_terminals:
        raise ValueError(f"need {scenario.n_terminals} parameter vectors, got {len(policy_bundle)}")
    params = [np.asarray(p, dtype=np.float64)[None] for p in policy_bundle]
    avg, w, mini, out = run_episodes(scenario, params, n_slots, [rng], hidden_dim=hidden_dim, norm=norm)
    return EpisodeRecord(per_terminal_avg_cost=avg[0], weighted_cost=float(w[0]),
                         minislots=int(mini[0]), outcomes=out[0])


def run_long(scenario: Scenario, policy, n_slots: int, rng: np.random.Generator, *,
             hidden_dim: int = 5, norm: float = 10.0, chunk: int = LONG_RUN_CHUNK) -> LongRunResult:
    """One long trajectory, simulated in chunks that carry the state forward.

    ``policy`` is a sequence of flat parameter vectors (one per terminal) or
    an ``(N,)`` array of fixed contention probabilities.
    """
    n = scenario.n_terminals
    k = scenario.mac.mini_slot_count
    if isinstance(policy, np.ndarray):
        packed = np.asarray(policy, dtype=np.float64).reshape(1, n)
    else:
        if len(policy) != n:
            raise ValueError(f"need {n} parameter vectors, got {len(policy)}")
        packed = _policy_arrays(scenario, [np.asarray(p)[None] for p in policy], hidden_dim, 1)
    s0, s1 = scenario.kernel_state(1)
    cost = np.zeros(n)
    minislots = 0
    outcomes = np.zeros(3, dtype=np.int64)
    done = 0
    while done < n_slots:
        step = min(chunk, n_slots - done)
        u_data, u_energy, u_cont = draw_uniforms(rng, step, n, k)
        c, mini, out = kernels.simulate(scenario.kinds, scenario.data_rates, scenario.energy_rates,
                                        scenario.capacities, packed, norm, u_data[None],
                                        u_energy[None], u_cont[None], s0, s1)
        cost += c[0]
        minislots += int(mini[0])
        outcomes += out[0]
        done += step
    return LongRunResult(per_terminal_avg_cost=cost / n_slots, n_slots=n_slots, minislots=minislots,
                         outcomes=outcomes, elapsed_ms=scenario.mac.elapsed_ms(n_slots, minislots))


def three_terminal_scenario(mac: Optional[MacConfig] = None) -> Scenario:
    """The three-terminal heterogeneous setup: AoI, queue and energy harvesting."""
    return Scenario(
        terminals=(
            TerminalConfig(TerminalKind.AOI, data_arrival_rate=0.1),
            TerminalConfig(TerminalKind.QUEUE, data_arrival_rate=0.1),
            TerminalConfig(TerminalKind.IDT_EH, energy_arrival_rate=0.2, energy_capacity=1),
        ),
        mac=mac or MacConfig(),
    )
