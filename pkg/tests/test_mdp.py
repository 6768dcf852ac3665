import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlao.errors import InvalidArgumentError, ResourceLimitError
from rlao.mdp import (
    OPTIMAL,
    GroundMDP,
    Policy,
    average_return,
    optimal_gain,
    plan_finite,
    random_mdp,
    step_distributions,
    trajectory_distribution,
    validate_mdp,
    value_discounted,
    value_finite,
)


def swap_chain():
    t = np.zeros((2, 1, 2))
    t[0, 0, 1] = t[1, 0, 0] = 1.0
    return GroundMDP(t, np.array([[1.0], [0.0]]), 1.0, start_state=0)


def single_state(r=1.0):
    return GroundMDP(np.ones((1, 1, 1)), np.full((1, 1), r), 1.0, start_state=0)


def test_valid_chain_has_empty_report():
    assert validate_mdp(swap_chain()) == []


def test_short_row_is_reported_by_pair():
    t = np.zeros((2, 1, 2))
    t[0, 0, 1] = 0.9
    t[1, 0, 0] = 1.0
    problems = validate_mdp(GroundMDP(t, np.zeros((2, 1)), 1.0))
    assert len(problems) == 1 and "(0, 0)" in problems[0]


def test_fixture_is_valid(chain):
    assert validate_mdp(chain[0]) == []


def test_reward_and_range_violations_are_listed():
    t = np.full((1, 1, 1), 1.0)
    problems = validate_mdp(GroundMDP(t, np.full((1, 1), 2.0), 1.0))
    assert any("reward" in p for p in problems)


def test_finite_value_of_single_state():
    assert value_finite(single_state(), Policy.constant(1), 5).values[0] == 5.0


def test_finite_value_of_swap_chain():
    assert value_finite(swap_chain(), OPTIMAL, 2).values[0] == 1.0


@pytest.mark.parametrize("h", [0, -3])
def test_nonpositive_horizon_rejected(h):
    with pytest.raises(InvalidArgumentError):
        value_finite(swap_chain(), OPTIMAL, h)


def test_discounted_geometric_series():
    v, _ = value_discounted(single_state(), 0.9, tol=1e-10)
    assert abs(v.values[0] - 10.0) <= 1e-10


def test_discounted_zero_rewards(rng):
    m = random_mdp(rng, 4, 2)
    zero = GroundMDP(m.transition, np.zeros((4, 2)), 1.0)
    v, pol = value_discounted(zero, 0.9)
    assert np.all(v.values == 0.0)
    pol.check(4, 2)


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.5, 1.5])
def test_discount_out_of_range(gamma):
    with pytest.raises(InvalidArgumentError):
        value_discounted(single_state(), gamma)


def test_discounted_matches_long_finite_backup(rng):
    m = random_mdp(rng, 4, 3)
    gamma, tol = 0.95, 1e-8
    v, _ = value_discounted(m, gamma, tol=tol)
    w = np.zeros(4)
    for _ in range(2000):
        w = (m.reward + gamma * m.transition @ w).max(axis=1)
    assert np.max(np.abs(v.values - w)) <= tol


def test_discounted_fixed_policy_is_exact(rng):
    m = random_mdp(rng, 5, 2)
    pol = Policy(rng.integers(2, size=5))
    v, same = value_discounted(m, 0.9, pol)
    assert same is pol
    idx = np.arange(5)
    p, r = m.transition[idx, pol.table], m.reward[idx, pol.table]
    assert np.allclose(v.values, r + 0.9 * p @ v.values, atol=1e-12)


def test_average_return_cases(rng):
    assert average_return(single_state(), Policy.constant(1), 0, 7) == 1.0
    assert average_return(swap_chain(), Policy.constant(2), 0, 2) == 0.5
    m = random_mdp(rng, 5, 2)
    pol = Policy(rng.integers(2, size=(6, 5)))
    assert average_return(m, pol, 3, 6) == value_finite(m, pol, 6).values[3] / 6


def test_deterministic_path_enumeration():
    d = trajectory_distribution(swap_chain(), 0, Policy.constant(2), 3)
    assert len(d) == 1 and d.probs[0] == 1.0
    assert d.states[0].tolist() == [0, 1, 0, 1]


def test_path_cap_names_the_cap(rng):
    m = random_mdp(rng, 6, 1)
    with pytest.raises(ResourceLimitError, match="100"):
        trajectory_distribution(m, 0, Policy.constant(6), 4, cap=100)


def test_marginals_agree_with_matrix_propagation(rng):
    m = random_mdp(rng, 4, 2, sparsity=0.3)
    pol = Policy(rng.integers(2, size=(5, 4)))
    d = trajectory_distribution(m, 1, pol, 5)
    steps = step_distributions(m, 1, pol, 5)
    for k in range(6):
        assert np.allclose(d.marginal(k, 4), steps[k], atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4), a=st.integers(1, 3), t=st.integers(1, 4))
def test_path_probabilities_sum_to_one(seed, n, a, t):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, n, a, sparsity=0.4)
    pol = Policy(rng.integers(a, size=(t, n)))
    d = trajectory_distribution(m, 0, pol, t)
    assert abs(d.probs.sum() - 1.0) <= 1e-12
    assert d.states.shape[1] == t + 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), h=st.integers(1, 6))
def test_optimal_dominates_every_policy(seed, h):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, 5, 3)
    best = value_finite(m, OPTIMAL, h).values
    pol = Policy(rng.integers(3, size=(h, 5)))
    assert np.all(best >= value_finite(m, pol, h).values - 1e-12)
    assert np.all((0 <= best) & (best <= h * m.r_max + 1e-12))


def test_plan_ties_go_to_lowest_action():
    m = GroundMDP(np.ones((1, 3, 1)), np.ones((1, 3)), 1.0)
    _, pol = plan_finite(m, 4)
    assert np.all(pol.table == 0)


def test_optimal_gain_matches_long_average(rng):
    m = random_mdp(rng, 5, 2)
    g = optimal_gain(m)
    h = 4000
    assert abs(value_finite(m, OPTIMAL, h).values.max() / h - g) < 5e-3


def test_serialization_round_trip(rng):
    m = random_mdp(rng, 3, 2, start_state=2)
    back = GroundMDP.from_dict(m.to_dict())
    assert np.array_equal(back.transition, m.transition)
    assert np.array_equal(back.reward, m.reward)
    assert back.start_state == 2 and back.r_max == m.r_max


def test_arrays_are_read_only(rng):
    m = random_mdp(rng, 3, 2)
    with pytest.raises(ValueError):
        m.transition[0, 0, 0] = 1.0


def test_finite_value_equals_trajectory_expectation(rng):
    m = random_mdp(rng, 5, 2)
    pol = Policy(rng.integers(2, size=(4, 5)))
    d = trajectory_distribution(m, 2, pol, 4)
    steps = np.arange(4)
    acts = d.actions
    rewards = m.reward[d.states[:, :4], acts].sum(axis=1)
    assert abs(rewards @ d.probs - value_finite(m, pol, 4).values[2]) <= 1e-12
    assert acts.shape[1] == len(steps)
