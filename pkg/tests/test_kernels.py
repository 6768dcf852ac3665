import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlao import _kernels as K
from rlao._rng import derive_key, uniform, uniform_array, trial_keys
from rlao.abstraction import Abstraction
from rlao.mdp import random_mdp

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not available")


def scalar_online(cdf, state_map, start, target, n_visits, key, step_cap):
    # reference loop: counter 2t picks the action, 2t+1 the transition
    n_actions = cdf.shape[1]
    s, visits, t = start, 0, 0
    ys, xs = [], []
    while visits < n_visits and t < step_cap:
        a = min(int(uniform(key, 2 * t) * n_actions), n_actions - 1)
        row = cdf[s, a]
        nxt = min(int(np.count_nonzero(row <= uniform(key, 2 * t + 1))), row.size - 1)
        if (state_map[s], a) == target:
            visits += 1
            xs.append(s)
            ys.append(state_map[nxt])
        s, t = nxt, t + 1
    return ys, xs, t


def test_uniform_matches_vectorised():
    keys = trial_keys(3, 50, 1)
    for c in (0, 1, 17, 2**40):
        vec = uniform_array(keys, c)
        assert vec.tolist() == [uniform(int(k), c) for k in keys]
        assert np.all((vec >= 0) & (vec < 1))


def test_keys_differ_across_ids():
    assert len({derive_key(0, i) for i in range(1000)}) == 1000
    assert derive_key(1, 2, 3) != derive_key(1, 3, 2)


def test_tail_pinned_to_one():
    t = np.zeros((1, 1, 4))
    t[0, 0, :2] = [0.1 + 0.2, 0.7]  # 0.30000000000000004 + 0.7 rounds above 1
    cdf = K.cumulative_rows(t)
    assert cdf[0, 0].tolist()[1:] == [1.0, 1.0, 1.0]
    t2 = np.zeros((1, 1, 3))
    t2[0, 0, 0] = 1.0
    assert K.cumulative_rows(t2)[0, 0].tolist() == [1.0, 1.0, 1.0]


def test_online_matches_scalar_reference(rng):
    m = random_mdp(rng, 6, 2, sparsity=0.3)
    phi = Abstraction(np.array([0, 0, 1, 1, 2, 2]), 3)
    cdf = K.cumulative_rows(m.transition)
    keys = trial_keys(9, 25, 0)
    y, x, done, steps = K.online_rollouts(cdf, phi.state_map, 3, 0, (0, 1), 15, keys, 10_000, use_numba=False)
    for i, key in enumerate(keys):
        ys, xs, t = scalar_online(cdf, phi.state_map, 0, (0, 1), 15, int(key), 10_000)
        assert y[i].tolist() == np.bincount(ys, minlength=3).tolist()
        assert x[i].tolist() == np.bincount(xs, minlength=6).tolist()
        assert steps[i] == t and done[i]


def test_step_cap_marks_incomplete(chain):
    m, phi = chain
    cdf = K.cumulative_rows(m.transition)
    # block C is only reached through A, so 5 steps cannot produce 10 visits
    _, _, done, steps = K.online_rollouts(cdf, phi.state_map, 3, 0, (2, 0), 10, trial_keys(0, 4), 5,
                                          use_numba=False)
    assert not done.any() and steps.tolist() == [5] * 4


def test_sources_sum_to_length(chain):
    m, phi = chain
    cdf = K.cumulative_rows(m.transition)
    y = K.source_draws(cdf, phi.state_map, 3, np.array([0, 1, 0, 1, 0]), 0, trial_keys(2, 30), use_numba=False)
    assert np.all(y.sum(axis=1) == 5) and np.all(y[:, 0] == 0)


@needs_numba
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 7), a=st.integers(1, 3), visits=st.integers(1, 40))
def test_backends_identical(seed, n, a, visits):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, n, a, sparsity=0.4)
    k = int(rng.integers(1, n + 1))
    phi = Abstraction.from_labels(np.concatenate([np.arange(k), rng.integers(k, size=n - k)]))
    cdf = K.cumulative_rows(m.transition)
    keys = trial_keys(seed, 20, 0)
    target = (int(phi.state_map[0]), 0)
    fast = K.online_rollouts(cdf, phi.state_map, k, 0, target, visits, keys, 5000, use_numba=True)
    slow = K.online_rollouts(cdf, phi.state_map, k, 0, target, visits, keys, 5000, use_numba=False)
    for f, s in zip(fast, slow):
        assert np.array_equal(f, s)
    sources = rng.integers(n, size=visits)
    assert np.array_equal(K.source_draws(cdf, np.arange(n), n, sources, 0, keys, use_numba=True),
                          K.source_draws(cdf, np.arange(n), n, sources, 0, keys, use_numba=False))


def test_env_flag_forces_numpy_backend():
    code = "from rlao import _kernels as K; print(K.backend())"
    env = {**os.environ, "RLAO_NO_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
