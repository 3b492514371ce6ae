"""Reference schemes: state-blind p-CSMA and a centralized Whittle-index scheduler."""
from __future__ import annotations

import numpy as np

from . import kernels
from .mac import LONG_RUN_CHUNK, LongRunResult, Scenario, draw_uniforms, run_long
from .model import TerminalKind


def whittle_index(a: float, b: float, lam: float) -> float:
    """AoI Whittle index for buffered age ``a``, gap ``b = h - a`` and arrival rate ``lam``."""
    if not 0 < lam <= 1:
        raise ValueError(f"the index is defined for arrival rates in (0, 1], got {lam}")
    if a < 1 or b < 1:
        raise ValueError(f"need a >= 1 and b >= 1, got a={a}, b={b}")
    return float(kernels._whittle_scalar(float(a), float(b), float(lam)))


def default_p_const(scenario: Scenario) -> float:
    return 1.0 / scenario.n_terminals


def run_pure_csma(scenario: Scenario, p_const: float, n_slots: int, rng: np.random.Generator,
                  *, chunk: int = LONG_RUN_CHUNK) -> LongRunResult:
    """Long-run averages when every eligible terminal contends with ``p_const``."""
    if not 0 < p_const <= 1:
        raise ValueError(f"p_const must be in (0, 1], got {p_const}")
    probs = np.full(scenario.n_terminals, float(p_const))
    return run_long(scenario, probs, n_slots, rng, chunk=chunk)


def run_whittle_oracle(scenario: Scenario, n_slots: int, rng: np.random.Generator,
                       *, chunk: int = LONG_RUN_CHUNK) -> LongRunResult:
    """Each slot, the buffered terminal with the largest index transmits, collision-free.

    Consumes the same per-slot uniform layout as the contention simulator, so
    data arrivals match a :func:`run_pure_csma` run driven by an identically
    seeded generator. A terminal with zero arrival rate never buffers a
    packet, so its (undefined) index is never needed.
    """
    bad = [i for i, t in enumerate(scenario.terminals) if t.kind is not TerminalKind.AOI]
    if bad:
        raise ValueError(f"the Whittle oracle needs AoI terminals only; terminals {bad} are not")
    rates = scenario.data_rates
    n = scenario.n_terminals
    k = scenario.mac.mini_slot_count
    s0, s1 = scenario.kernel_state(1)
    cost = np.zeros(n)
    scheduled = np.zeros(n, dtype=np.int64)
    done = 0
    while done < n_slots:
        step = min(chunk, n_slots - done)
        u_data = rng.random((step, n))
        rng.random((step, n))  # energy draws, unused
        rng.random((step, k, n))  # contention draws, unused
        c, sched = kernels.whittle_schedule(rates, u_data[None], s0, s1)
        cost += c[0]
        scheduled += sched[0]
        done += step
    outcomes = np.array([n_slots - scheduled.sum(), scheduled.sum(), 0], dtype=np.int64)
    return LongRunResult(per_terminal_avg_cost=cost / n_slots, n_slots=n_slots, minislots=0,
                         outcomes=outcomes, elapsed_ms=scenario.mac.elapsed_ms(n_slots, 0),
                         scheduled=scheduled)


def whittle_oracle_episodes(scenario: Scenario, n_slots: int, rngs) -> np.ndarray:
    """Per-episode average AoI of the index scheduler, each episode from the initial state.

    Streams are consumed with the contention simulator's layout, so passing
    identically seeded generators gives common random arrivals.
    """
    if any(t.kind is not TerminalKind.AOI for t in scenario.terminals):
        raise ValueError("the Whittle oracle needs AoI terminals only")
    n, k = scenario.n_terminals, scenario.mac.mini_slot_count
    draws = [draw_uniforms(r, n_slots, n, k)[0] for r in rngs]
    s0, s1 = scenario.kernel_state(len(rngs))
    cost, _ = kernels.whittle_schedule(scenario.data_rates, np.stack(draws), s0, s1)
    return cost / n_slots
