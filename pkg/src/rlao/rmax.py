"""R-MAX driven by abstract observations, and its identity-abstraction baseline."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .abstraction import Abstraction, AbstractModel
from .errors import ContractViolationError, InvalidArgumentError, ModelViolationError
from .mdp import GroundMDP, Policy, plan_finite
from .sampling import AbstractedEnv, SampleStore, self_loop_rows

REWARD_TOL = 1e-12


@dataclass(frozen=True)
class RMaxConfig:
    delta: float
    eps: float
    t_eps: int
    m_known: int
    max_steps: int = 10**6
    seed: int = 0
    eval_window: int | None = None  # defaults to 10 * t_eps * n_abstract
    keep_log: bool = False

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InvalidArgumentError(f"delta must lie in (0, 1), got {self.delta}")
        if self.eps <= 0:
            raise InvalidArgumentError("eps must be positive")
        if self.t_eps < 1 or self.m_known < 1 or self.max_steps < 1:
            raise InvalidArgumentError("t_eps, m_known and max_steps must be >= 1")
        if self.eval_window is not None and self.eval_window < 1:
            raise InvalidArgumentError("eval_window must be >= 1")


@dataclass(frozen=True)
class EpisodeEntry:
    start_step: int
    policy_id: int
    steps: int
    became_known: bool


class RMaxState:
    """Optimistic abstract model plus the visit bookkeeping behind it."""

    def __init__(self, n_abstract: int, n_actions: int, r_max: float, m_known: int,
                 store: SampleStore | None = None):
        self.n_abstract, self.n_actions = n_abstract, n_actions
        self.r_max = float(r_max)
        self.m_known = int(m_known)
        self.transition = self_loop_rows(n_abstract, n_actions)
        self.reward = np.full((n_abstract, n_actions), self.r_max)
        self.counts = np.zeros((n_abstract, n_actions, n_abstract), dtype=np.int64)
        self.observed_reward = np.full((n_abstract, n_actions), np.nan)
        self.known = np.zeros((n_abstract, n_actions), dtype=bool)
        self.store = store
        self.step_count = 0
        self.episode_log: list[EpisodeEntry] = []

    @property
    def n_samples(self) -> np.ndarray:
        return self.counts.sum(axis=2)

    @property
    def model(self) -> AbstractModel:
        return AbstractModel(self.transition, self.reward, self.r_max)

    def all_known(self) -> bool:
        return bool(self.known.all())

    def observe_reward(self, b: int, a: int, r: float) -> None:
        prev = self.observed_reward[b, a]
        if np.isnan(prev):
            self.observed_reward[b, a] = r
        elif abs(prev - r) > REWARD_TOL:
            raise ModelViolationError(f"reward of abstract pair ({b}, {a}) changed from {prev} to {r}")

    def add_sample(self, b: int, a: int, outcome: int, source: int | None = None) -> bool:
        """Append an outcome while the pair is still unknown; True once it reaches m_known."""
        if self.known[b, a]:
            return False
        self.counts[b, a, outcome] += 1
        if self.store is not None and source is not None:
            self.store.record(b, a, source, outcome)
        return int(self.counts[b, a].sum()) >= self.m_known


def optimistic_plan(state: RMaxState, current: int, t_eps: int) -> Policy:
    """Optimal ``t_eps``-step nonstationary policy of the optimistic model.

    The table covers every abstract state, since execution may leave
    ``current``; ties go to the lowest action index.
    """
    if not 0 <= current < state.n_abstract:
        raise InvalidArgumentError(f"abstract state {current} out of range")
    return plan_finite(state.model, t_eps)[1]


def mark_known(state: RMaxState, b: int, a: int) -> RMaxState:
    """Freeze the empirical row and observed reward of pair ``(b, a)``."""
    n = int(state.counts[b, a].sum())
    if state.known[b, a]:
        raise ContractViolationError(f"abstract pair ({b}, {a}) is already known")
    if n != state.m_known:
        raise ContractViolationError(f"abstract pair ({b}, {a}) has {n} samples, needs exactly {state.m_known}")
    state.transition[b, a] = state.counts[b, a] / n
    state.reward[b, a] = state.observed_reward[b, a]
    state.known[b, a] = True
    return state


@dataclass
class RunResult:
    steps_to_all_known: int | None
    completed: bool
    final_policy: Policy | None
    episode_returns: list = field(default_factory=list)
    post_known_average: float = float("nan")
    total_steps: int = 0
    episode_log: list = field(default_factory=list)
    final_model: AbstractModel | None = None
    frozen_store: SampleStore | None = None
    log: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "completed": self.completed,
            "steps_to_all_known": self.steps_to_all_known,
            "post_known_average": self.post_known_average,
            "total_steps": self.total_steps,
            "episodes": len(self.episode_log),
        }


LOG_COLUMNS = ("step", "abstract_state", "action", "next_abstract_state", "reward", "known_count", "episode_id")


def rmax_run(env: AbstractedEnv, cfg: RMaxConfig) -> RunResult:
    """Run R-MAX on abstract observations until every abstract pair is known, then exploit.

    ``env`` must already be reset. In verification mode the hidden source
    states of every counted sample are kept in ``RunResult.frozen_store``.
    """
    k, n_actions = env.n_abstract, env.n_actions
    store = SampleStore(env.phi, n_actions) if env.verification else None
    state = RMaxState(k, n_actions, env.mdp.r_max, cfg.m_known, store)
    obs = env.observation
    log: list = []
    episode = 0

    def act(a: int) -> tuple[int, float, int | None]:
        source = env.hidden_state if env.verification else None
        nxt, r = env.step(a)
        state.step_count += 1
        return nxt, r, source

    while not state.all_known() and state.step_count < cfg.max_steps:
        policy = optimistic_plan(state, obs, cfg.t_eps)
        start, became = state.step_count, False
        for t in range(cfg.t_eps):
            a = int(policy.table[t, obs])
            nxt, r, source = act(a)
            state.observe_reward(obs, a, r)
            if state.add_sample(obs, a, nxt, source):
                mark_known(state, obs, a)
                became = True
            if cfg.keep_log:
                log.append((state.step_count - 1, obs, a, nxt, r, int(state.known.sum()), episode))
            obs = nxt
            if became or state.step_count >= cfg.max_steps:
                break
        state.episode_log.append(EpisodeEntry(start, episode, state.step_count - start, became))
        episode += 1

    if not state.all_known():
        return RunResult(None, False, None, total_steps=state.step_count, episode_log=state.episode_log,
                         final_model=state.model, frozen_store=store, log=log)

    steps_known = state.step_count
    final = plan_finite(state.model, cfg.t_eps)[1]
    window = cfg.eval_window if cfg.eval_window is not None else 10 * cfg.t_eps * k
    returns, total, done = [], 0.0, 0
    while done < window:
        ep_return = 0.0
        for t in range(min(cfg.t_eps, window - done)):
            a = int(final.table[t, obs])
            nxt, r, _ = act(a)
            if cfg.keep_log:
                log.append((state.step_count - 1, obs, a, nxt, r, int(state.known.sum()), episode))
            ep_return += r
            done += 1
            obs = nxt
        returns.append(ep_return)
        total += ep_return
        episode += 1
    return RunResult(steps_known, True, final, returns, total / window, state.step_count, state.episode_log,
                     state.model, store, log)


def rmax_baseline_run(m: GroundMDP, cfg: RMaxConfig, verification: bool = False) -> RunResult:
    """R-MAX on the ground MDP itself (identity abstraction), env seeded by ``cfg.seed``."""
    env = AbstractedEnv(m, Abstraction.identity(m.n_states), seed=cfg.seed, verification=verification)
    env.reset()
    return rmax_run(env, cfg)


def rmax_abstract_run(m: GroundMDP, phi: Abstraction, cfg: RMaxConfig, verification: bool = False) -> RunResult:
    """R-MAX through ``phi`` with the environment seeded by ``cfg.seed``."""
    env = AbstractedEnv(m, phi, seed=cfg.seed, verification=verification)
    env.reset()
    return rmax_run(env, cfg)


def write_run_log(result: RunResult, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        w.writerows(result.log)
    return path


def return_mixing_time(m: GroundMDP, policy: Policy, gain: float, eps: float, horizon: int = 1000) -> int:
    """Smallest T such that every t-step average return with T <= t <= horizon is within eps of ``gain``.

    ``policy`` must be stationary; averages are taken from every start state.
    """
    if policy.nonstationary:
        raise InvalidArgumentError("mixing time needs a stationary policy")
    idx = np.arange(m.n_states)
    p = m.transition[idx, policy.table]
    r = m.reward[idx, policy.table]
    v = np.zeros(m.n_states)
    ok = np.zeros(horizon + 1, dtype=bool)
    for t in range(1, horizon + 1):
        v = r + p @ v
        ok[t] = np.max(np.abs(v / t - gain)) <= eps
    if not ok[horizon]:
        raise InvalidArgumentError(f"average return not within {eps} of the gain by step {horizon}")
    bad = np.flatnonzero(~ok[1:])
    return int(bad[-1] + 2) if bad.size else 1


def optimal_stationary_policy(m: GroundMDP, tol: float = 1e-12, max_iter: int = 1_000_000) -> Policy:
    """Gain-optimal stationary policy from relative value iteration on the aperiodic transform."""
    n = m.n_states
    t_ap = 0.5 * m.transition + 0.5 * np.eye(n)[:, None, :]
    h = np.zeros(n)
    for _ in range(max_iter):
        q = m.reward + t_ap @ h
        h_new = q.max(axis=1)
        diff = h_new - h
        h = h_new - h_new[0]
        if diff.max() - diff.min() < tol:
            return Policy(np.argmax(m.reward + t_ap @ h, axis=1))
    raise InvalidArgumentError("relative value iteration did not converge")
