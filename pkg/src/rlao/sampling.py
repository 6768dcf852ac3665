"""Abstracted-observation environment, sample bookkeeping and empirical models."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ._kernels import cumulative_rows
from ._rng import derive_key, uniform, uniform_array
from .abstraction import (
    Abstraction,
    AbstractModel,
    WeightingFn,
    lifted_transitions,
)
from .errors import ContractViolationError, DomainError, InvalidArgumentError, StateError
from .mdp import GroundMDP

_STEP_STREAM = 0
_START_STREAM = 1
_ACTION_STREAM = 2


def _pick_scalar(cdf_row: np.ndarray, u: float) -> int:
    j = int(np.count_nonzero(cdf_row <= u))
    return min(j, cdf_row.size - 1)


@dataclass(frozen=True)
class TraceRecord:
    step: int
    abstract_state: int
    action: int
    ground_state: int
    next_abstract_state: int
    reward: float


class AbstractedEnv:
    """Ground MDP seen through ``phi``: callers only observe abstract states.

    The hidden ground state is readable through :attr:`hidden_state` only when
    the environment is built with ``verification=True``.
    """

    def __init__(self, mdp: GroundMDP, phi: Abstraction, seed: int = 0, verification: bool = False,
                 keep_trace: bool = False):
        if phi.n_states != mdp.n_states:
            raise InvalidArgumentError("abstraction and MDP disagree on the number of states")
        self.mdp = mdp
        self.phi = phi
        self.verification = verification
        self.keep_trace = keep_trace
        self.trace: list[TraceRecord] = []
        self._cdf = cumulative_rows(mdp.transition)
        self._seed = int(seed)
        self._key = derive_key(self._seed, _STEP_STREAM)
        self._counter = 0
        self._state: int | None = None

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def n_abstract(self) -> int:
        return self.phi.n_abstract

    @property
    def draws(self) -> int:
        """Number of transition draws consumed since the last reset."""
        return self._counter

    @property
    def observation(self) -> int:
        if self._state is None:
            raise StateError("environment has not been reset")
        return self.phi(self._state)

    @property
    def hidden_state(self) -> int:
        if not self.verification:
            raise StateError("ground state is hidden outside verification mode")
        if self._state is None:
            raise StateError("environment has not been reset")
        return self._state

    def reset(self, seed: int | None = None) -> int:
        if seed is not None:
            self._seed = int(seed)
        self._key = derive_key(self._seed, _STEP_STREAM)
        self._counter = 0
        self.trace = []
        if self.mdp.start_state is not None:
            self._state = int(self.mdp.start_state)
        else:
            u = uniform(derive_key(self._seed, _START_STREAM), 0)
            self._state = min(int(u * self.mdp.n_states), self.mdp.n_states - 1)
        return self.phi(self._state)

    def step(self, a: int) -> tuple[int, float]:
        if self._state is None:
            raise StateError("environment has not been reset")
        if not 0 <= a < self.mdp.n_actions:
            raise InvalidArgumentError(f"action {a} out of range")
        s = self._state
        reward = float(self.mdp.reward[s, a])
        nxt = _pick_scalar(self._cdf[s, a], uniform(self._key, self._counter))
        if self.keep_trace:
            self.trace.append(TraceRecord(self._counter, self.phi(s), a, s, self.phi(nxt), reward))
        self._counter += 1
        self._state = nxt
        return self.phi(nxt), reward


class SampleStore:
    """Append-only per-(abstract state, action) source and outcome sequences."""

    def __init__(self, phi: Abstraction, n_actions: int):
        self.phi = phi
        self.n_actions = int(n_actions)
        k = phi.n_abstract
        self._x: list[list[list[int]]] = [[[] for _ in range(n_actions)] for _ in range(k)]
        self._y: list[list[list[int]]] = [[[] for _ in range(n_actions)] for _ in range(k)]

    def record(self, block: int, a: int, source: int, outcome: int) -> "SampleStore":
        if self.phi(source) != block:
            raise ContractViolationError(f"source state {source} lies in block {self.phi(source)}, not {block}")
        if not 0 <= outcome < self.phi.n_abstract:
            raise InvalidArgumentError(f"outcome {outcome} is not an abstract state")
        self._x[block][a].append(int(source))
        self._y[block][a].append(int(outcome))
        return self

    def count(self, block: int, a: int) -> int:
        return len(self._y[block][a])

    def counts(self) -> np.ndarray:
        return np.array([[len(seq) for seq in row] for row in self._y], dtype=np.int64)

    def x_seq(self, block: int, a: int) -> tuple[int, ...]:
        return tuple(self._x[block][a])

    def y_seq(self, block: int, a: int) -> tuple[int, ...]:
        return tuple(self._y[block][a])

    def outcome_counts(self) -> np.ndarray:
        """``(K, A, K)`` histogram of outcomes."""
        k = self.phi.n_abstract
        out = np.zeros((k, self.n_actions, k), dtype=np.int64)
        for b in range(k):
            for a in range(self.n_actions):
                if self._y[b][a]:
                    out[b, a] = np.bincount(self._y[b][a], minlength=k)
        return out

    def source_counts(self) -> np.ndarray:
        """``(S, A)`` histogram of source ground states."""
        out = np.zeros((self.phi.n_states, self.n_actions), dtype=np.int64)
        for b in range(self.phi.n_abstract):
            for a in range(self.n_actions):
                if self._x[b][a]:
                    out[:, a] += np.bincount(self._x[b][a], minlength=self.phi.n_states)
        return out


def self_loop_rows(n_abstract: int, n_actions: int) -> np.ndarray:
    rows = np.zeros((n_abstract, n_actions, n_abstract))
    idx = np.arange(n_abstract)
    rows[idx, :, idx] = 1.0
    return rows


def empirical_model(store: SampleStore, reward: np.ndarray, default: np.ndarray | None = None,
                    r_max: float | None = None) -> AbstractModel:
    """Frequency estimate of abstract transitions; unvisited pairs take ``default`` rows."""
    k, n_actions = store.phi.n_abstract, store.n_actions
    counts = store.outcome_counts()
    n = counts.sum(axis=2, keepdims=True)
    if default is None:
        default = self_loop_rows(k, n_actions)
    t = np.where(n > 0, counts / np.maximum(n, 1), default)
    reward = np.asarray(reward, dtype=np.float64)
    return AbstractModel(t, reward, float(reward.max()) if r_max is None else r_max)


def empirical_weighting(store: SampleStore) -> WeightingFn:
    """Visit-frequency weights; pairs never tried lie outside the domain."""
    n = store.counts()
    x = store.source_counts()
    per_state_n = n[store.phi.state_map]  # (S, A)
    w = np.where(per_state_n > 0, x / np.maximum(per_state_n, 1), 0.0)
    return WeightingFn(w, n > 0)


def induced_target(m: GroundMDP, phi: Abstraction, store: SampleStore,
                   default: np.ndarray | None = None) -> AbstractModel:
    """Average lifted row over the recorded sources of each abstract pair.

    Unvisited pairs raise :class:`DomainError` unless ``default`` rows are given.
    """
    lifted = lifted_transitions(m, phi)
    k, n_actions = phi.n_abstract, m.n_actions
    t = np.empty((k, n_actions, k))
    r = np.zeros((k, n_actions))
    for b in range(k):
        for a in range(n_actions):
            xs = store.x_seq(b, a)
            if not xs:
                if default is None:
                    raise DomainError(f"no samples for abstract pair ({b}, {a})")
                t[b, a] = default[b, a]
                continue
            t[b, a] = lifted[list(xs), a].sum(axis=0) / len(xs)
            r[b, a] = m.reward[list(xs), a].sum() / len(xs)
    return AbstractModel(t, r, m.r_max)


def l1_gaps(lifted_rows: np.ndarray, y_counts: np.ndarray, x_counts: np.ndarray) -> np.ndarray:
    """Per-trial ``||T_Y - T_omegaX||_1`` for one abstract pair from count arrays.

    ``lifted_rows`` is ``(S, K)`` (lifted rows under the pair's action),
    ``y_counts`` is ``(n, K)`` and ``x_counts`` is ``(n, S)``.
    """
    n = y_counts.sum(axis=1, keepdims=True).astype(np.float64)
    t_y = y_counts / n
    t_w = (x_counts @ lifted_rows) / n
    return np.abs(t_y - t_w).sum(axis=1)


def simulator_sample_count(n_abstract: int, n_actions: int, delta: float, eps: float) -> int:
    from .bounds import samples_needed

    return samples_needed(n_abstract, delta / (n_abstract * n_actions), eps, "iid_simulator")


PrototypeRule = str | Callable[[np.ndarray, int], int]


def choose_prototype(members: np.ndarray, a: int, rule: PrototypeRule, seed: int, block: int) -> int:
    if callable(rule):
        s = int(rule(members, a))
    elif rule == "lowest":
        s = int(members.min())
    elif rule == "random":
        u = uniform(derive_key(seed, _START_STREAM, block, a), 0)
        s = int(members[min(int(u * len(members)), len(members) - 1)])
    else:
        raise InvalidArgumentError(f"unknown prototype rule {rule!r}")
    if s not in members:
        raise ContractViolationError(f"prototype {s} is not a member of block {block}")
    return s


def collect_simulator(m: GroundMDP, phi: Abstraction, delta: float, eps: float,
                      prototype_rule: PrototypeRule = "lowest", seed: int = 0,
                      m_count: int | None = None) -> SampleStore:
    """Simulator sampling: per abstract pair, iid draws from one prototype state."""
    if not 0 < delta < 1:
        raise InvalidArgumentError(f"delta must lie in (0, 1), got {delta}")
    if not 0 < eps < 2:
        raise InvalidArgumentError(f"eps must lie in (0, 2), got {eps}")
    if m_count is None:
        m_count = simulator_sample_count(phi.n_abstract, m.n_actions, delta, eps)
    cdf = cumulative_rows(m.transition)
    store = SampleStore(phi, m.n_actions)
    counters = np.arange(m_count, dtype=np.uint64)
    for b, members in enumerate(phi.blocks):
        for a in range(m.n_actions):
            x = choose_prototype(members, a, prototype_rule, seed, b)
            key = np.uint64(derive_key(seed, b, a))
            u = uniform_array(np.full(m_count, key, dtype=np.uint64), counters)
            row = cdf[x, a]
            nxt = np.minimum((row[None, :] <= u[:, None]).sum(axis=1), row.size - 1)
            for s_next in phi.state_map[nxt]:
                store.record(b, a, x, int(s_next))
    return store


def uniform_rollout(env: AbstractedEnv, store: SampleStore, n_steps: int, seed: int = 0) -> SampleStore:
    """Act uniformly at random for ``n_steps`` steps, recording every transition.

    Needs a verification-mode environment, since sources are ground states.
    """
    key = derive_key(seed, _ACTION_STREAM)
    obs = env.observation
    for t in range(n_steps):
        a = min(int(uniform(key, t) * env.n_actions), env.n_actions - 1)
        source = env.hidden_state
        nxt, _ = env.step(a)
        store.record(obs, a, source, nxt)
        obs = nxt
    return store


TRACE_COLUMNS = ("step", "abstract_state", "action", "ground_state", "next_abstract_state", "reward")


def export_trace(records: Iterable[TraceRecord], path: str | Path, expose_ground: bool = False) -> Path:
    """Write trace records as CSV; the ground-state column only when ``expose_ground``."""
    path = Path(path)
    cols: Sequence[str] = TRACE_COLUMNS if expose_ground else tuple(c for c in TRACE_COLUMNS if c != "ground_state")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in records:
            w.writerow([getattr(rec, c) for c in cols])
    return path
