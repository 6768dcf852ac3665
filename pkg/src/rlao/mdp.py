"""Finite tabular MDPs and exact planning / enumeration oracles."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import InvalidArgumentError, ResourceLimitError

ROW_SUM_TOL = 1e-12
DEFAULT_PATH_CAP = 10**7


class _Optimal:
    """Marker asking an evaluator for the optimal value instead of a fixed policy."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "OPTIMAL"


OPTIMAL = _Optimal()


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroundMDP:
    """Tabular MDP with deterministic rewards.

    ``transition[s, a, s']`` is T(s'|s,a) and ``reward[s, a]`` is R(s,a).
    Construction only checks shapes; use :func:`validate_mdp` to check the
    probabilistic invariants.
    """

    transition: np.ndarray
    reward: np.ndarray
    r_max: float
    start_state: int | None = None

    def __post_init__(self):
        t = _frozen(self.transition)
        r = _frozen(self.reward)
        if t.ndim != 3 or t.shape[0] != t.shape[2]:
            raise InvalidArgumentError(f"transition must have shape (S, A, S), got {t.shape}")
        if r.shape != t.shape[:2]:
            raise InvalidArgumentError(f"reward must have shape {t.shape[:2]}, got {r.shape}")
        if t.shape[0] < 1 or t.shape[1] < 1:
            raise InvalidArgumentError("need at least one state and one action")
        if not float(self.r_max) > 0:
            raise InvalidArgumentError("r_max must be positive")
        if self.start_state is not None and not 0 <= int(self.start_state) < t.shape[0]:
            raise InvalidArgumentError(f"start_state {self.start_state} out of range")
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "r_max", float(self.r_max))
        if self.start_state is not None:
            object.__setattr__(self, "start_state", int(self.start_state))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_start(self, start: int | None) -> "GroundMDP":
        return type(self)(self.transition, self.reward, self.r_max, start)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "reward": self.reward.tolist(),
            "transition": self.transition.reshape(-1).tolist(),
            "r_max": self.r_max,
            "start_state": self.start_state,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "GroundMDP":
        try:
            n, k = int(doc["n_states"]), int(doc["n_actions"])
            t = np.asarray(doc["transition"], dtype=np.float64)
            r = np.asarray(doc["reward"], dtype=np.float64)
            r_max = float(doc["r_max"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed MDP document: {exc}") from exc
        if t.size != n * k * n:
            raise InvalidArgumentError(f"transition has {t.size} entries, expected {n * k * n}")
        if r.size != n * k:
            raise InvalidArgumentError(f"reward has {r.size} entries, expected {n * k}")
        return cls(t.reshape(n, k, n), r.reshape(n, k), r_max, doc.get("start_state"))


def validate_mdp(m: GroundMDP) -> list[str]:
    """List every violated invariant; an empty list means the MDP is valid."""
    problems = []
    t, r = m.transition, m.reward
    sums = t.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)):
        problems.append(f"row ({s}, {a}) sums to {float(sums[s, a])!r}, not 1")
    for s, a, s2 in zip(*np.nonzero((t < 0) | (t > 1) | ~np.isfinite(t))):
        problems.append(f"T({s2} | {s}, {a}) = {float(t[s, a, s2])!r} outside [0, 1]")
    for s, a in zip(*np.nonzero((r < 0) | (r > m.r_max) | ~np.isfinite(r))):
        problems.append(f"reward R({s}, {a}) = {float(r[s, a])!r} outside [0, r_max={m.r_max}]")
    return problems


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic policy.

    ``table`` has shape ``(S,)`` for a stationary policy or ``(h, S)`` for a
    nonstationary one, where ``table[t, s]`` is the action taken in state ``s``
    at step ``t`` of an ``h``-step episode (``t = 0`` is the first step).
    """

    table: np.ndarray

    def __post_init__(self):
        tab = np.array(self.table, dtype=np.int64, copy=True)
        if tab.ndim not in (1, 2):
            raise InvalidArgumentError("policy table must be 1-D or 2-D")
        tab.setflags(write=False)
        object.__setattr__(self, "table", tab)

    @property
    def nonstationary(self) -> bool:
        return self.table.ndim == 2

    @property
    def horizon(self) -> int | None:
        return self.table.shape[0] if self.nonstationary else None

    @property
    def n_states(self) -> int:
        return self.table.shape[-1]

    def action(self, s: int, t: int = 0) -> int:
        if self.nonstationary:
            return int(self.table[t, s])
        return int(self.table[s])

    def step_table(self, h: int) -> np.ndarray:
        """Actions as an ``(h, S)`` array, repeating a stationary table."""
        if self.nonstationary:
            if self.horizon < h:
                raise InvalidArgumentError(f"policy defined for {self.horizon} steps, need {h}")
            return self.table[:h]
        return np.broadcast_to(self.table, (h, self.n_states))

    def lift(self, state_map: np.ndarray) -> "Policy":
        """Ground policy acting as this (abstract) policy on ``state_map[s]``."""
        return Policy(self.table[..., np.asarray(state_map)])

    def check(self, n_states: int, n_actions: int) -> None:
        if self.n_states != n_states:
            raise InvalidArgumentError(f"policy covers {self.n_states} states, MDP has {n_states}")
        if self.table.size and (self.table.min() < 0 or self.table.max() >= n_actions):
            raise InvalidArgumentError(f"policy actions must lie in [0, {n_actions})")

    @classmethod
    def constant(cls, n_states: int, action: int = 0) -> "Policy":
        return cls(np.full(n_states, action))


@dataclass(frozen=True, eq=False)
class ValueTable:
    values: np.ndarray
    horizon: int | None = None
    gamma: float | None = None

    def __getitem__(self, s):
        return self.values[s]


def _q_backup(m: GroundMDP, v: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    return m.reward + gamma * (m.transition @ v)


def plan_finite(m: GroundMDP, h: int) -> tuple[ValueTable, Policy]:
    """Optimal ``h``-step values and the nonstationary optimal policy.

    Backward induction; ties go to the lowest action index.
    """
    if int(h) < 1:
        raise InvalidArgumentError("horizon must be >= 1")
    h = int(h)
    v = np.zeros(m.n_states)
    table = np.empty((h, m.n_states), dtype=np.int64)
    for t in range(h - 1, -1, -1):
        q = _q_backup(m, v)
        table[t] = np.argmax(q, axis=1)
        v = q[np.arange(m.n_states), table[t]]
    return ValueTable(v, horizon=h), Policy(table)


def value_finite(m: GroundMDP, policy, h: int) -> ValueTable:
    """Exact ``h``-step undiscounted value, for a policy or :data:`OPTIMAL`."""
    if int(h) < 1:
        raise InvalidArgumentError("horizon must be >= 1")
    if policy is OPTIMAL:
        return plan_finite(m, h)[0]
    policy.check(m.n_states, m.n_actions)
    steps = policy.step_table(int(h))
    idx = np.arange(m.n_states)
    v = np.zeros(m.n_states)
    for t in range(int(h) - 1, -1, -1):
        a = steps[t]
        v = m.reward[idx, a] + m.transition[idx, a] @ v
    return ValueTable(v, horizon=int(h))


def evaluate_discounted(m: GroundMDP, gamma: float, policy: Policy) -> np.ndarray:
    """Exact discounted value of a stationary policy (linear solve)."""
    if policy.nonstationary:
        raise InvalidArgumentError("discounted evaluation needs a stationary policy")
    policy.check(m.n_states, m.n_actions)
    idx = np.arange(m.n_states)
    p = m.transition[idx, policy.table]
    r = m.reward[idx, policy.table]
    return np.linalg.solve(np.eye(m.n_states) - gamma * p, r)


def value_discounted(m: GroundMDP, gamma: float, policy=OPTIMAL, tol: float = 1e-10) -> tuple[ValueTable, Policy]:
    """Discounted values within ``tol`` of the truth, plus a greedy policy.

    Value iteration starts from zero and stops once the sup-norm change is at most ``tol (1 - gamma) / (2 gamma)``.
    For a fixed policy the values are solved exactly and the policy is
    returned unchanged.
    """
    if not 0.0 < gamma < 1.0:
        raise InvalidArgumentError(f"gamma must lie in (0, 1), got {gamma}")
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    if policy is not OPTIMAL:
        return ValueTable(evaluate_discounted(m, gamma, policy), gamma=gamma), policy
    threshold = tol * (1.0 - gamma) / (2.0 * gamma)
    v = np.zeros(m.n_states)
    while True:
        q = _q_backup(m, v, gamma)
        v_new = q.max(axis=1)
        done = np.max(np.abs(v_new - v)) <= threshold
        v = v_new
        if done:
            break
    greedy = np.argmax(_q_backup(m, v, gamma), axis=1)
    return ValueTable(v, gamma=gamma), Policy(greedy)


def average_return(m: GroundMDP, policy, start: int, t: int) -> float:
    """Expected ``t``-step undiscounted average return from ``start``."""
    return float(value_finite(m, policy, t).values[start]) / int(t)


def optimal_gain(m: GroundMDP, tol: float = 1e-12, max_iter: int = 1_000_000) -> float:
    """Optimal long-run average reward of a unichain MDP.

    Relative value iteration on the aperiodicity-transformed chain
    ``0.5 I + 0.5 T`` (same gain for every stationary policy); stops when the
    span of the Bellman increment falls below ``tol``.
    """
    n = m.n_states
    t_ap = 0.5 * m.transition + 0.5 * np.eye(n)[:, None, :]
    h = np.zeros(n)
    for _ in range(max_iter):
        h_new = (m.reward + t_ap @ h).max(axis=1)
        diff = h_new - h
        lo, hi = diff.min(), diff.max()
        h = h_new - h_new[0]
        if hi - lo < tol:
            return float(0.5 * (lo + hi))
    raise ResourceLimitError(f"relative value iteration did not converge in {max_iter} sweeps")


@dataclass(frozen=True, eq=False)
class TrajectoryDistribution:
    """All positive-probability paths of a fixed length.

    ``states[i]`` holds the ``t + 1`` visited states of path ``i``,
    ``actions[i]`` the ``t`` actions taken and ``probs[i]`` its probability.
    """

    states: np.ndarray
    actions: np.ndarray
    probs: np.ndarray

    @property
    def length(self) -> int:
        return self.actions.shape[1]

    def __len__(self) -> int:
        return len(self.probs)

    def marginal(self, k: int, n_states: int) -> np.ndarray:
        return np.bincount(self.states[:, k], weights=self.probs, minlength=n_states)


def trajectory_distribution(
    m: GroundMDP, start: int, policy: Policy, t: int, cap: int = DEFAULT_PATH_CAP
) -> TrajectoryDistribution:
    """Enumerate every length-``t`` path from ``start`` with its exact probability."""
    if int(t) < 1:
        raise InvalidArgumentError("path length must be >= 1")
    policy.check(m.n_states, m.n_actions)
    steps = policy.step_table(int(t))
    states = np.array([[start]], dtype=np.int64)
    actions = np.zeros((1, 0), dtype=np.int64)
    probs = np.ones(1)
    for k in range(int(t)):
        cur = states[:, -1]
        a = steps[k][cur]
        rows = m.transition[cur, a]
        parent, nxt = np.nonzero(rows > 0)
        if len(parent) > cap:
            raise ResourceLimitError(f"trajectory enumeration exceeds the path cap of {cap}")
        probs = probs[parent] * rows[parent, nxt]
        states = np.column_stack([states[parent], nxt])
        actions = np.column_stack([actions[parent], a[parent]])
    return TrajectoryDistribution(states, actions, probs)


def step_distributions(m: GroundMDP, start: int, policy: Policy, t: int) -> np.ndarray:
    """State distributions after 0..t steps by repeated matrix application."""
    steps = policy.step_table(int(t))
    idx = np.arange(m.n_states)
    d = np.zeros(m.n_states)
    d[start] = 1.0
    out = [d]
    for k in range(int(t)):
        d = d @ m.transition[idx, steps[k]]
        out.append(d)
    return np.array(out)


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    r_max: float = 1.0,
    sparsity: float = 0.0,
    start_state: int | None = None,
) -> GroundMDP:
    """Random MDP with Dirichlet rows; ``sparsity`` zeroes a share of entries."""
    t = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    if sparsity > 0:
        mask = rng.random(t.shape) >= sparsity
        keep = rng.integers(n_states, size=(n_states, n_actions))
        mask[np.arange(n_states)[:, None], np.arange(n_actions)[None, :], keep] = True
        t = t * mask
        t /= t.sum(axis=2, keepdims=True)
    r = rng.uniform(0.0, r_max, size=(n_states, n_actions))
    return GroundMDP(t, r, r_max, start_state)
