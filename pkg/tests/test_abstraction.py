import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlao.abstraction import (
    Abstraction,
    BenchmarkSpec,
    WeightingFn,
    build_abstract_mdp,
    generate_benchmark,
    lift_transition,
    measure_similarity,
    premise_errors,
    random_weighting,
    uniform_weighting,
    validate_weighting,
)
from rlao.errors import ContractViolationError, DomainError, InvalidArgumentError
from rlao.mdp import GroundMDP, random_mdp

A, B, C = 0, 1, 2


def random_partition(rng, n, k):
    labels = np.concatenate([np.arange(k), rng.integers(k, size=n - k)])
    return Abstraction.from_labels(rng.permutation(labels))


class TestAbstraction:
    def test_blocks_partition_states(self, rng):
        phi = random_partition(rng, 9, 4)
        members = np.sort(np.concatenate(phi.blocks))
        assert members.tolist() == list(range(9))

    def test_empty_block_rejected(self):
        with pytest.raises(InvalidArgumentError, match="surjective"):
            Abstraction(np.array([0, 0, 2]), 3)

    def test_out_of_range_label_rejected(self):
        with pytest.raises(InvalidArgumentError):
            Abstraction(np.array([0, 3]), 2)

    def test_labels_numbered_by_smallest_member(self):
        phi = Abstraction.from_labels(["x", "y", "x", "z", "y"])
        assert phi.state_map.tolist() == [0, 1, 0, 2, 1]

    def test_round_trip(self, chain):
        _, phi = chain
        back = Abstraction.from_dict(phi.to_dict())
        assert np.array_equal(back.state_map, phi.state_map) and back.n_abstract == 3


class TestLift:
    def test_identity_is_unchanged(self, rng):
        m = random_mdp(rng, 5, 2)
        phi = Abstraction.identity(5)
        assert np.array_equal(lift_transition(m, phi, 3, 1), m.transition[3, 1])

    def test_fixture_row(self, chain):
        m, phi = chain
        assert lift_transition(m, phi, 0, 0).tolist() == [0.0, 0.6, 0.4]

    def test_single_block_is_total_mass(self, rng):
        m = random_mdp(rng, 6, 2)
        out = lift_transition(m, Abstraction(np.zeros(6, dtype=int), 1), 2, 0)
        assert out.shape == (1,) and abs(out[0] - 1.0) <= 1e-12

    def test_bad_index(self, chain):
        m, phi = chain
        with pytest.raises(InvalidArgumentError):
            lift_transition(m, phi, 4, 0)
        with pytest.raises(InvalidArgumentError):
            lift_transition(m, phi, 0, 1)


class TestBuild:
    def test_identity_reproduces_model(self, rng):
        m = random_mdp(rng, 5, 3)
        model = build_abstract_mdp(m, Abstraction.identity(5), uniform_weighting(Abstraction.identity(5), 3))
        assert np.max(np.abs(model.transition - m.transition)) <= 1e-15
        assert np.max(np.abs(model.reward - m.reward)) <= 1e-15

    def test_fixture_uniform_weights(self, chain):
        m, phi = chain
        model = build_abstract_mdp(m, phi, uniform_weighting(phi, 1))
        assert abs(model.transition[A, 0, B] - 0.5) <= 1e-15
        assert abs(model.transition[A, 0, C] - 0.5) <= 1e-15
        assert model.transition[B, 0].tolist() == [1.0, 0.0, 0.0]

    def test_invalid_weighting_names_pair(self, chain):
        m, phi = chain
        w = np.array([[0.7], [0.2], [1.0], [1.0]])
        with pytest.raises(ContractViolationError, match="block 0 under action 0"):
            build_abstract_mdp(m, phi, WeightingFn(w))

    def test_partial_weighting_needs_default(self, chain):
        m, phi = chain
        defined = np.array([[True], [False], [True]])
        w = WeightingFn(np.array([[0.5], [0.5], [1.0], [1.0]]), defined)
        with pytest.raises(ContractViolationError, match=r"\(1, 0\)"):
            build_abstract_mdp(m, phi, w)
        default = np.broadcast_to(np.eye(3)[:, None, :], (3, 1, 3))
        model = build_abstract_mdp(m, phi, w, default=default)
        assert model.transition[B, 0].tolist() == [0.0, 1.0, 0.0]
        assert model.reward[B, 0] == 0.0

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12), a=st.integers(1, 3))
    def test_rows_normalized_and_premise_holds(self, seed, n, a):
        rng = np.random.default_rng(seed)
        m = random_mdp(rng, n, a, sparsity=0.3)
        phi = random_partition(rng, n, int(rng.integers(1, n + 1)))
        model = build_abstract_mdp(m, phi, random_weighting(phi, a, rng))
        assert np.max(np.abs(model.transition.sum(axis=2) - 1.0)) <= 1e-12
        eta = measure_similarity(m, phi)
        prem = premise_errors(m, phi, model)
        assert prem.eta_t <= eta.eta_t + 1e-12
        assert prem.eta_r <= eta.eta_r + 1e-12


class TestWeighting:
    def test_singletons_valid(self):
        phi = Abstraction.identity(3)
        assert validate_weighting(WeightingFn(np.ones((3, 2))), phi) == []

    def test_short_block_reported(self, chain):
        _, phi = chain
        w = WeightingFn(np.array([[0.7], [0.2], [1.0], [1.0]]))
        problems = validate_weighting(w, phi)
        assert len(problems) == 1 and "block 0" in problems[0] and "action 0" in problems[0]

    def test_undefined_pair_query(self, chain):
        _, phi = chain
        w = WeightingFn(np.array([[1.0], [0.0], [1.0], [1.0]]), np.array([[True], [True], [False]]))
        assert w.at(phi, 0, 0) == 1.0
        with pytest.raises(DomainError):
            w.at(phi, 3, 0)


class TestSimilarity:
    def test_identity_is_zero(self, rng):
        m = random_mdp(rng, 5, 2)
        eta = measure_similarity(m, Abstraction.identity(5))
        assert (eta.eta_r, eta.eta_t) == (0.0, 0.0)

    def test_duplicated_states_are_exact(self, rng):
        base = random_mdp(rng, 3, 2)
        # each ground state doubled; every copy splits its mass evenly between twins
        t = np.repeat(np.repeat(base.transition, 2, axis=0), 2, axis=2) / 2
        m = GroundMDP(t, np.repeat(base.reward, 2, axis=0), 1.0)
        eta = measure_similarity(m, Abstraction(np.repeat(np.arange(3), 2), 3))
        assert eta.eta_r == 0.0 and eta.eta_t <= 1e-15

    def test_fixture(self, chain):
        eta = measure_similarity(*chain)
        assert eta.eta_r == 0.0 and abs(eta.eta_t - 0.2) <= 1e-15

    def test_relabeling_within_blocks(self, rng):
        m = random_mdp(rng, 6, 2)
        phi = Abstraction(np.array([0, 0, 0, 1, 1, 2]), 3)
        perm = np.array([2, 0, 1, 4, 3, 5])
        pm = GroundMDP(m.transition[perm][:, :, perm], m.reward[perm], 1.0)
        a, b = measure_similarity(m, phi), measure_similarity(pm, phi)
        assert abs(a.eta_t - b.eta_t) <= 1e-15 and a.eta_r == b.eta_r


class TestBenchmark:
    def test_exact_similarity(self):
        m, phi = generate_benchmark({"n_abstract": 3, "block_sizes": [2, 3, 1], "n_actions": 2,
                                     "target_eta_t": 0.0, "target_eta_r": 0.0, "seed": 4})
        eta = measure_similarity(m, phi)
        assert (eta.eta_r, eta.eta_t) == (0.0, 0.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_targets_respected(self, seed):
        spec = BenchmarkSpec(2, (3, 3), 2, 0.1, 0.05, seed=seed)
        m, phi = generate_benchmark(spec)
        eta = measure_similarity(m, phi)
        assert eta.eta_t <= 0.1 and eta.eta_r <= 0.05
        assert phi.state_map.tolist() == [0, 0, 0, 1, 1, 1]
        assert np.max(np.abs(m.transition.sum(axis=2) - 1.0)) <= 1e-12

    def test_deterministic(self):
        spec = BenchmarkSpec(2, (3, 2), 3, 0.2, 0.1, seed=9)
        m1, p1 = generate_benchmark(spec)
        m2, p2 = generate_benchmark(spec)
        assert m1.transition.tobytes() == m2.transition.tobytes()
        assert m1.reward.tobytes() == m2.reward.tobytes()
        assert np.array_equal(p1.state_map, p2.state_map)

    @pytest.mark.parametrize("bad", [{"target_eta_t": 2.5}, {"target_eta_r": 3.0}, {"block_sizes": [2]}])
    def test_infeasible(self, bad):
        doc = {"n_abstract": 2, "block_sizes": [2, 2], "n_actions": 1, "target_eta_t": 0.1,
               "target_eta_r": 0.0, **bad}
        with pytest.raises(InvalidArgumentError):
            generate_benchmark(doc)
