"""Monte Carlo sampling kernels.

Two interchangeable backends: numba ``@njit`` loops and a lockstep numpy
fallback. Both consume the counter-based stream from :mod:`rlao._rng` in the
same order (step ``t`` uses counter ``2t`` for the action and ``2t+1`` for the
transition), so they return identical arrays. Set ``RLAO_NO_NUMBA=1`` to force
the numpy backend; it is also used when numba cannot be imported.
"""
from __future__ import annotations

import os

import numpy as np

from ._rng import GOLDEN, INV_2_53, MIX1, MIX2, uniform_array

try:
    if os.environ.get("RLAO_NO_NUMBA", "") not in ("", "0"):
        raise ImportError("disabled by RLAO_NO_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def cumulative_rows(transition: np.ndarray) -> np.ndarray:
    """Inverse-CDF tables: cumulative sums with the tail pinned to exactly 1.

    Entries at and beyond the last positive-probability state are set to 1.0,
    so rounding in the cumulative sum can never select a zero-probability
    trailing state.
    """
    cdf = np.cumsum(transition, axis=-1)
    positive = transition > 0
    n = transition.shape[-1]
    last = n - 1 - np.argmax(positive[..., ::-1], axis=-1)
    cols = np.arange(n)
    cdf[cols >= last[..., None]] = 1.0
    return np.ascontiguousarray(cdf)


# numpy backend ---------------------------------------------------------------

def _pick(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (cdf_rows <= u[:, None]).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def _online_numpy(cdf, state_map, n_abstract, start, target_block, target_action, n_visits, keys, step_cap):
    n_trials = keys.size
    n_states, n_actions = cdf.shape[0], cdf.shape[1]
    y_counts = np.zeros((n_trials, n_abstract), dtype=np.int64)
    x_counts = np.zeros((n_trials, n_states), dtype=np.int64)
    visits = np.zeros(n_trials, dtype=np.int64)
    steps = np.zeros(n_trials, dtype=np.int64)
    state = np.full(n_trials, start, dtype=np.int64)
    active = np.arange(n_trials) if n_visits > 0 else np.arange(0)
    t = 0
    while active.size and t < step_cap:
        k = keys[active]
        a = np.minimum((uniform_array(k, 2 * t) * n_actions).astype(np.int64), n_actions - 1)
        s = state[active]
        nxt = _pick(cdf[s, a], uniform_array(k, 2 * t + 1))
        hit = (state_map[s] == target_block) & (a == target_action)
        h = active[hit]
        np.add.at(x_counts, (h, s[hit]), 1)
        np.add.at(y_counts, (h, state_map[nxt[hit]]), 1)
        visits[h] += 1
        state[active] = nxt
        t += 1
        steps[active] = t
        active = active[visits[active] < n_visits]
    return y_counts, x_counts, visits >= n_visits, steps


def _sources_numpy(cdf, state_map, n_abstract, sources, action, keys):
    n_trials, m = keys.size, sources.size
    y_counts = np.zeros((n_trials, n_abstract), dtype=np.int64)
    rows = np.arange(n_trials)
    for i in range(m):
        nxt = _pick(np.broadcast_to(cdf[sources[i], action], (n_trials, cdf.shape[2])), uniform_array(keys, i))
        np.add.at(y_counts, (rows, state_map[nxt]), 1)
    return y_counts


# numba backend ---------------------------------------------------------------

if HAVE_NUMBA:
    _G = np.uint64(GOLDEN)
    _M1 = np.uint64(MIX1)
    _M2 = np.uint64(MIX2)
    _ONE = np.uint64(1)

    @njit(cache=True)
    def _u01(key, counter):
        z = key + (np.uint64(counter) + _ONE) * _G
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
        return float(z >> np.uint64(11)) * INV_2_53

    @njit(cache=True)
    def _pick_one(cdf, s, a, u):
        n = cdf.shape[2]
        j = 0
        while j < n - 1 and cdf[s, a, j] <= u:
            j += 1
        return j

    @njit(cache=True)
    def _online_numba(cdf, state_map, n_abstract, start, target_block, target_action, n_visits, keys, step_cap):
        n_trials = keys.size
        n_states, n_actions = cdf.shape[0], cdf.shape[1]
        y_counts = np.zeros((n_trials, n_abstract), dtype=np.int64)
        x_counts = np.zeros((n_trials, n_states), dtype=np.int64)
        done = np.zeros(n_trials, dtype=np.bool_)
        steps = np.zeros(n_trials, dtype=np.int64)
        for i in range(n_trials):
            key = keys[i]
            s = start
            visits = 0
            t = 0
            while visits < n_visits and t < step_cap:
                a = min(int(_u01(key, 2 * t) * n_actions), n_actions - 1)
                nxt = _pick_one(cdf, s, a, _u01(key, 2 * t + 1))
                if state_map[s] == target_block and a == target_action:
                    x_counts[i, s] += 1
                    y_counts[i, state_map[nxt]] += 1
                    visits += 1
                s = nxt
                t += 1
            steps[i] = t
            done[i] = visits >= n_visits
        return y_counts, x_counts, done, steps

    @njit(cache=True)
    def _sources_numba(cdf, state_map, n_abstract, sources, action, keys):
        n_trials = keys.size
        y_counts = np.zeros((n_trials, n_abstract), dtype=np.int64)
        for i in range(n_trials):
            for j in range(sources.size):
                nxt = _pick_one(cdf, sources[j], action, _u01(keys[i], j))
                y_counts[i, state_map[nxt]] += 1
        return y_counts


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def online_rollouts(cdf, state_map, n_abstract, start, target, n_visits, keys, step_cap, use_numba=None):
    """Uniform-random-action rollouts, one per key, until ``target`` is tried ``n_visits`` times.

    Returns ``(y_counts (n, K), x_counts (n, S), completed (n,), steps (n,))``.
    """
    use_numba = HAVE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    fn = _online_numba if use_numba else _online_numpy
    return fn(
        np.ascontiguousarray(cdf, dtype=np.float64),
        np.ascontiguousarray(state_map, dtype=np.int64),
        int(n_abstract), int(start), int(target[0]), int(target[1]), int(n_visits),
        np.ascontiguousarray(keys, dtype=np.uint64), int(step_cap),
    )


def source_draws(cdf, state_map, n_abstract, sources, action, keys, use_numba=None):
    """Draw one outcome from ``T(.|sources[j], action)`` for each j, per key.

    A constant ``sources`` array gives iid prototype sampling; a varying one
    gives independent but non-identically distributed draws.
    Returns abstract outcome counts ``(n, K)``.
    """
    use_numba = HAVE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    fn = _sources_numba if use_numba else _sources_numpy
    return fn(
        np.ascontiguousarray(cdf, dtype=np.float64),
        np.ascontiguousarray(state_map, dtype=np.int64),
        int(n_abstract), np.ascontiguousarray(sources, dtype=np.int64), int(action),
        np.ascontiguousarray(keys, dtype=np.uint64),
    )
