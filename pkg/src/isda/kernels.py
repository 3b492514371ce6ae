"""Hot simulation loops, compiled with numba when available.

Every kernel exists twice: an explicit loop compiled with ``numba.njit`` and
a pure-numpy version vectorised over the episode axis.  Both consume the same
pre-drawn uniforms and evaluate floating point expressions in the same order,
so they return identical results.

Set ``ISDA_DISABLE_NUMBA=1`` before import to force the numpy path, or use
:func:`use_backend` at runtime.

Kernel state layout, per (episode, terminal), as int64 arrays ``s0``/``s1``:

=========  =====================  ===================
kind       s0                     s1
=========  =====================  ===================
AOI (0)    buffered age, 0=empty  destination AoI h
IDT_EH (1) slots since delivery   energy level
QUEUE (2)  queue length           unused (always 0)
=========  =====================  ===================
"""
from __future__ import annotations

import contextlib
import math
import os

import numpy as np

AOI, IDT_EH, QUEUE = 0, 1, 2
IDLE, SUCCESS, COLLISION = 0, 1, 2

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
_DISABLED = os.environ.get("ISDA_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
_backend = "numba" if HAVE_NUMBA and not _DISABLED else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def _jit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True, fastmath=False, error_model="numpy")(fn)


# ---------------------------------------------------------------------------
# scalar helpers (shared by the compiled loops)


def _whittle_scalar(a, b, lam):
    if b > (lam / 2.0) * (a * a - a) + a:
        x = (b + a * (a - 1.0) * lam / 2.0) / (1.0 - lam + a * lam)
        return 0.5 * x * x + (1.0 / lam - 0.5) * x
    return b / lam


_whittle_jit = _jit(_whittle_scalar)


# ---------------------------------------------------------------------------
# contention


def _contend_loop(u_cont, probs, eligible, winners, used):
    n_trials, n_mini, n_term = u_cont.shape
    for r in range(n_trials):
        used[r] = n_mini
        for k in range(n_mini):
            cnt = 0
            for i in range(n_term):
                if eligible[r, i] and u_cont[r, k, i] < probs[r, i]:
                    winners[r, i] = True
                    cnt += 1
            if cnt > 0:
                used[r] = k + 1
                break


_contend_jit = _jit(_contend_loop)


def _contend_numpy(u_cont, probs, eligible, winners, used):
    n_trials, n_mini, _ = u_cont.shape
    done = np.zeros(n_trials, dtype=np.bool_)
    used[:] = n_mini
    for k in range(n_mini):
        sig = eligible & (u_cont[:, k, :] < probs) & ~done[:, None]
        hit = sig.any(axis=1)
        winners |= sig
        used[hit] = k + 1
        done |= hit


def resolve_contention(u_cont, probs, eligible):
    """Resolve a batch of contention periods.

    ``u_cont`` is ``(R, K, N)`` uniforms, ``probs`` and ``eligible`` are
    ``(R, N)``.  Returns the boolean ``(R, N)`` set of terminals that signalled
    in the first non-silent mini-slot and the number of mini-slots consumed.
    """
    u_cont = np.ascontiguousarray(u_cont, dtype=np.float64)
    n_trials, _, n_term = u_cont.shape
    probs = np.ascontiguousarray(np.broadcast_to(probs, (n_trials, n_term)), dtype=np.float64)
    eligible = np.ascontiguousarray(np.broadcast_to(eligible, (n_trials, n_term)), dtype=np.bool_)
    winners = np.zeros((n_trials, n_term), dtype=np.bool_)
    used = np.zeros(n_trials, dtype=np.int64)
    fn = _contend_jit if _backend == "numba" else _contend_numpy
    fn(u_cont, probs, eligible, winners, used)
    return winners, used


# ---------------------------------------------------------------------------
# episode simulation


def _simulate_loop(kinds, data_rate, energy_rate, capacity, w1, b1, w2, b2,
                   fixed_p, use_fixed, norm, u_data, u_energy, u_cont, s0, s1,
                   cost_sum, minislots, outcomes):
    n_ep, n_slots, n_term = u_data.shape
    n_mini = u_cont.shape[2]
    n_hidden = b1.shape[2]
    probs = np.empty(n_term)
    elig = np.empty(n_term, dtype=np.bool_)
    tx = np.empty(n_term, dtype=np.bool_)
    for m in range(n_ep):
        for t in range(n_slots):
            for i in range(n_term):
                kind = kinds[i]
                if u_data[m, t, i] < data_rate[i]:
                    if kind == AOI:
                        s0[m, i] = 1
                    elif kind == QUEUE:
                        s0[m, i] += 1
                if kind == IDT_EH:
                    elig[i] = s1[m, i] >= 1
                else:
                    elig[i] = s0[m, i] >= 1
                if use_fixed:
                    probs[i] = fixed_p[m, i]
                else:
                    x0 = s0[m, i] / norm
                    x1 = s1[m, i] / norm
                    l0 = 0.0
                    l1 = 0.0
                    for j in range(n_hidden):
                        acc = w1[m, i, j, 0] * x0 + w1[m, i, j, 1] * x1
                        acc = acc + b1[m, i, j]
                        z = acc if acc > 0.0 else 0.0
                        l0 = l0 + w2[m, i, 0, j] * z
                        l1 = l1 + w2[m, i, 1, j] * z
                    l0 = l0 + b2[m, i, 0]
                    l1 = l1 + b2[m, i, 1]
                    mx = l0 if l0 > l1 else l1
                    e0 = math.exp(l0 - mx)
                    e1 = math.exp(l1 - mx)
                    probs[i] = e0 / (e0 + e1)
                tx[i] = False
            used = n_mini
            cnt = 0
            for k in range(n_mini):
                for i in range(n_term):
                    if elig[i] and u_cont[m, t, k, i] < probs[i]:
                        tx[i] = True
                        cnt += 1
                if cnt > 0:
                    used = k + 1
                    break
            minislots[m] += used
            if cnt == 0:
                outcomes[m, IDLE] += 1
            elif cnt == 1:
                outcomes[m, SUCCESS] += 1
            else:
                outcomes[m, COLLISION] += 1
            for i in range(n_term):
                kind = kinds[i]
                x = tx[i] and cnt == 1
                if kind == AOI:
                    if x:
                        s1[m, i] = s0[m, i] + 1
                        s0[m, i] = 0
                    else:
                        s1[m, i] += 1
                        if s0[m, i] > 0:
                            s0[m, i] += 1
                    cost_sum[m, i] += s1[m, i]
                elif kind == QUEUE:
                    if x:
                        s0[m, i] -= 1
                    cost_sum[m, i] += s0[m, i]
                else:
                    if x:
                        s0[m, i] = 1
                    else:
                        s0[m, i] += 1
                    e = s1[m, i]
                    if tx[i]:
                        e -= 1
                    if u_energy[m, t, i] < energy_rate[i]:
                        e += 1
                    s1[m, i] = e if e < capacity[i] else capacity[i]
                    cost_sum[m, i] += s0[m, i]


_simulate_jit = _jit(_simulate_loop)


def _simulate_numpy(kinds, data_rate, energy_rate, capacity, w1, b1, w2, b2,
                    fixed_p, use_fixed, norm, u_data, u_energy, u_cont, s0, s1,
                    cost_sum, minislots, outcomes):
    n_ep, n_slots, n_term = u_data.shape
    n_mini = u_cont.shape[2]
    n_hidden = b1.shape[2]
    is_aoi = kinds == AOI
    is_queue = kinds == QUEUE
    is_eh = kinds == IDT_EH
    rows = np.arange(n_ep)
    winners = np.zeros((n_ep, n_term), dtype=np.bool_)
    used = np.zeros(n_ep, dtype=np.int64)
    for t in range(n_slots):
        arrive = u_data[:, t, :] < data_rate
        s0[...] = np.where(is_aoi & arrive, 1, s0)
        s0 += is_queue & arrive
        elig = np.where(is_eh, s1 >= 1, s0 >= 1)
        if use_fixed:
            probs = fixed_p
        else:
            x0 = (s0 / norm)[:, :, None]
            x1 = (s1 / norm)[:, :, None]
            acc = w1[..., 0] * x0 + w1[..., 1] * x1
            acc = acc + b1
            z = np.where(acc > 0.0, acc, 0.0)
            l0 = np.zeros((n_ep, n_term))
            l1 = np.zeros((n_ep, n_term))
            for j in range(n_hidden):
                l0 = l0 + w2[:, :, 0, j] * z[:, :, j]
                l1 = l1 + w2[:, :, 1, j] * z[:, :, j]
            l0 = l0 + b2[:, :, 0]
            l1 = l1 + b2[:, :, 1]
            mx = np.where(l0 > l1, l0, l1)
            e0 = np.exp(l0 - mx)
            e1 = np.exp(l1 - mx)
            probs = e0 / (e0 + e1)
        winners[...] = False
        _contend_numpy(u_cont[:, t], probs, elig, winners, used)
        minislots += used
        cnt = winners.sum(axis=1)
        outcomes[rows, np.minimum(cnt, 2)] += 1
        x = winners & (cnt == 1)[:, None]
        # AoI terminals
        new_h = np.where(x, s0 + 1, s1 + 1)
        new_a = np.where(x, 0, np.where(s0 > 0, s0 + 1, 0))
        # energy-harvesting terminals
        e = s1 - winners + (u_energy[:, t, :] < energy_rate)
        e = np.minimum(e, capacity)
        new_d = np.where(x, 1, s0 + 1)
        s0_next = np.where(is_aoi, new_a, np.where(is_queue, s0 - x, new_d))
        s1_next = np.where(is_aoi, new_h, np.where(is_eh, e, s1))
        s0[...] = s0_next
        s1[...] = s1_next
        cost_sum += np.where(is_aoi, s1, s0)


def simulate(kinds, data_rate, energy_rate, capacity, policy, norm,
             u_data, u_energy, u_cont, s0, s1):
    """Run ``M`` independent episodes in place.

    ``policy`` is either ``(W1, b1, W2, b2)`` padded network arrays (see
    :func:`isda.policy.pack_policies`) or an ``(M, N)`` array of fixed
    contention probabilities.  ``s0``/``s1`` are updated in place.

    Returns ``(cost_sum (M, N), minislots (M,), outcomes (M, 3))`` where
    ``outcomes`` counts idle, success and collision slots.
    """
    n_ep, _, n_term = u_data.shape
    kinds = np.ascontiguousarray(kinds, dtype=np.int64)
    data_rate = np.ascontiguousarray(data_rate, dtype=np.float64)
    energy_rate = np.ascontiguousarray(energy_rate, dtype=np.float64)
    capacity = np.ascontiguousarray(capacity, dtype=np.int64)
    if isinstance(policy, tuple):
        w1, b1, w2, b2 = (np.ascontiguousarray(a, dtype=np.float64) for a in policy)
        fixed_p = np.zeros((n_ep, n_term))
        use_fixed = False
    else:
        fixed_p = np.ascontiguousarray(np.broadcast_to(policy, (n_ep, n_term)), dtype=np.float64)
        w1 = np.zeros((n_ep, n_term, 1, 2))
        b1 = np.zeros((n_ep, n_term, 1))
        w2 = np.zeros((n_ep, n_term, 2, 1))
        b2 = np.zeros((n_ep, n_term, 2))
        use_fixed = True
    cost_sum = np.zeros((n_ep, n_term))
    minislots = np.zeros(n_ep, dtype=np.int64)
    outcomes = np.zeros((n_ep, 3), dtype=np.int64)
    fn = _simulate_jit if _backend == "numba" else _simulate_numpy
    fn(kinds, data_rate, energy_rate, capacity, w1, b1, w2, b2, fixed_p, use_fixed,
       float(norm), u_data, u_energy, u_cont, s0, s1, cost_sum, minislots, outcomes)
    return cost_sum, minislots, outcomes


# ---------------------------------------------------------------------------
# centralized Whittle-index scheduler (AoI terminals only)


def _whittle_loop(data_rate, u_data, s0, s1, cost_sum, scheduled):
    n_ep, n_slots, n_term = u_data.shape
    for m in range(n_ep):
        for t in range(n_slots):
            best = -1
            best_idx = -np.inf
            for i in range(n_term):
                if u_data[m, t, i] < data_rate[i]:
                    s0[m, i] = 1
                if s0[m, i] > 0:
                    a = float(s0[m, i])
                    idx = _whittle_jit(a, s1[m, i] - a, data_rate[i])
                    if idx > best_idx:
                        best_idx = idx
                        best = i
            for i in range(n_term):
                if i == best:
                    s1[m, i] = s0[m, i] + 1
                    s0[m, i] = 0
                    scheduled[m, i] += 1
                else:
                    s1[m, i] += 1
                    if s0[m, i] > 0:
                        s0[m, i] += 1
                cost_sum[m, i] += s1[m, i]


_whittle_sched_jit = _jit(_whittle_loop)


def whittle_index_array(a, b, lam):
    """Vectorised twin of the scalar index, same operation order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    x = (b + a * (a - 1.0) * lam / 2.0) / (1.0 - lam + a * lam)
    upper = 0.5 * x * x + (1.0 / lam - 0.5) * x
    return np.where(b > (lam / 2.0) * (a * a - a) + a, upper, b / lam)


def _whittle_numpy(data_rate, u_data, s0, s1, cost_sum, scheduled):
    n_ep, n_slots, n_term = u_data.shape
    rows = np.arange(n_ep)
    for t in range(n_slots):
        s0[...] = np.where(u_data[:, t, :] < data_rate, 1, s0)
        elig = s0 > 0
        a = s0.astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            idx = whittle_index_array(a, s1 - a, data_rate)
        idx = np.where(elig, idx, -np.inf)
        best = np.argmax(idx, axis=1)
        chosen = np.zeros((n_ep, n_term), dtype=np.bool_)
        chosen[rows, best] = elig[rows, best]
        scheduled += chosen
        new_h = np.where(chosen, s0 + 1, s1 + 1)
        s0[...] = np.where(chosen, 0, np.where(elig, s0 + 1, 0))
        s1[...] = new_h
        cost_sum += s1


def whittle_schedule(data_rate, u_data, s0, s1):
    """Centralized max-index scheduling of AoI terminals, in place.

    Returns ``(cost_sum (M, N), scheduled (M, N))``.
    """
    n_ep, _, n_term = u_data.shape
    data_rate = np.ascontiguousarray(data_rate, dtype=np.float64)
    cost_sum = np.zeros((n_ep, n_term))
    scheduled = np.zeros((n_ep, n_term), dtype=np.int64)
    fn = _whittle_sched_jit if _backend == "numba" else _whittle_numpy
    fn(data_rate, u_data, s0, s1, cost_sum, scheduled)
    return cost_sum, scheduled
