"""Closed-form concentration and value-loss bounds, sample-size solvers and exact checkers."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .abstraction import Abstraction, lifted_transitions
from .errors import InvalidArgumentError, PreconditionError, ResourceLimitError
from .mdp import DEFAULT_PATH_CAP, GroundMDP, Policy, trajectory_distribution, value_finite

# probability bounds ----------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    name: str
    inputs: dict = field(default_factory=dict)
    raw: float = 0.0
    clamped: float = 0.0

    def to_row(self) -> list:
        return [self.name, *self.inputs.values(), self.raw, self.clamped]

    def header(self) -> list[str]:
        return ["name", *self.inputs.keys(), "raw", "clamped"]


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def _check_prob_inputs(n: int, samples: int, eps: float) -> None:
    if eps <= 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    if n < 1:
        raise InvalidArgumentError(f"support size must be >= 1, got {n}")
    if samples < 0:
        raise InvalidArgumentError(f"sample count must be >= 0, got {samples}")


def _scaled_exp(coef: int, exponent: float) -> float:
    if coef == 0:
        return 0.0
    if coef.bit_length() < 1000:
        return float(coef) * math.exp(exponent)
    return math.exp(math.log(coef) + exponent)


def weissman_bound(n_support: int, n_samples: int, eps: float) -> BoundReport:
    """Pr(||P_hat - P||_1 >= eps) <= (2^n - 2) exp(-N eps^2 / 2) for iid samples."""
    _check_prob_inputs(n_support, n_samples, eps)
    raw = _scaled_exp(2**n_support - 2, -n_samples * eps * eps / 2.0)
    return BoundReport("weissman", {"n_support": n_support, "n_samples": n_samples, "eps": eps}, raw, _clamp(raw))


def noniid_l1_bound(n_abstract: int, m: int, eps: float) -> BoundReport:
    """Independent, non-identically distributed outcomes: same form over abstract states."""
    _check_prob_inputs(n_abstract, m, eps)
    raw = _scaled_exp(2**n_abstract - 2, -m * eps * eps / 2.0)
    return BoundReport("noniid_l1", {"n_abstract": n_abstract, "n_samples": m, "eps": eps}, raw, _clamp(raw))


def abstract_l1_bound(n_abstract: int, n_samples: int, eps: float) -> BoundReport:
    """Failure probability 2^n exp(-N eps^2 / 8) for ||T_Y - T_omegaX||_1 > eps."""
    _check_prob_inputs(n_abstract, n_samples, eps)
    raw = _scaled_exp(2**n_abstract, -n_samples * eps * eps / 8.0)
    return BoundReport("abstract_l1", {"n_abstract": n_abstract, "n_samples": n_samples, "eps": eps}, raw, _clamp(raw))


PROBABILITY_BOUNDS: dict[str, Callable[[int, int, float], BoundReport]] = {
    "weissman": weissman_bound,
    "noniid_l1": noniid_l1_bound,
    "abstract_l1": abstract_l1_bound,
}


# sample-size solvers ---------------------------------------------------------


def _smallest_int(pred: Callable[[int], bool], lo: int = 1) -> int:
    """Least integer >= lo with ``pred`` true, for ``pred`` monotone on [lo, inf)."""
    if pred(lo):
        return lo
    hi = max(2 * lo, 2)
    while not pred(hi):
        lo, hi = hi, 2 * hi
        if hi > 1 << 200:
            raise ResourceLimitError("no solution below 2**200")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _log_pow2_minus2(n: int) -> float:
    # ln(2^n - 2) without overflow; -inf for n = 1
    if n == 1:
        return -math.inf
    if n < 1000:
        return math.log(2**n - 2)
    return n * math.log(2.0)


SAMPLE_VARIANTS = ("martingale", "iid_simulator")


def samples_threshold(n_abstract: int, kappa: float, eps: float, variant: str) -> float:
    """Real-valued right-hand side of the sample-size inequality ``m >= threshold``."""
    if variant == "martingale":
        return 8.0 * (n_abstract * math.log(2.0) - math.log(kappa)) / (eps * eps)
    if variant == "iid_simulator":
        return 2.0 * (_log_pow2_minus2(n_abstract) - math.log(kappa)) / (eps * eps)
    raise InvalidArgumentError(f"unknown variant {variant!r}; expected one of {SAMPLE_VARIANTS}")


def samples_needed(n_abstract: int, kappa: float, eps: float, variant: str = "martingale") -> int:
    """Smallest sample count meeting the chosen variant's inequality (at least 1)."""
    if not 0 < kappa < 1:
        raise InvalidArgumentError(f"kappa must lie in (0, 1), got {kappa}")
    if not 0 < eps < 2:
        raise InvalidArgumentError(f"eps must lie in (0, 2), got {eps}")
    if n_abstract < 1:
        raise InvalidArgumentError("n_abstract must be >= 1")
    threshold = samples_threshold(n_abstract, kappa, eps, variant)
    if threshold == -math.inf:
        return 1
    return _smallest_int(lambda m: m >= threshold, max(1, math.floor(threshold)))


# value-loss bounds -----------------------------------------------------------


@dataclass(frozen=True)
class Horizon:
    """Either ``steps`` (finite, undiscounted) or ``gamma`` (discounted)."""

    steps: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if (self.steps is None) == (self.gamma is None):
            raise InvalidArgumentError("give exactly one of steps or gamma")
        if self.steps is not None and self.steps < 1:
            raise InvalidArgumentError("horizon must be >= 1")
        if self.gamma is not None and not 0 < self.gamma < 1:
            raise InvalidArgumentError("gamma must lie in (0, 1)")

    @classmethod
    def finite(cls, h: int) -> "Horizon":
        return cls(steps=int(h))

    @classmethod
    def discounted(cls, gamma: float) -> "Horizon":
        return cls(gamma=float(gamma))


def _nonneg(**kw: float) -> None:
    for k, v in kw.items():
        if v < 0:
            raise InvalidArgumentError(f"{k} must be nonnegative, got {v}")


def value_gap_abstraction(eta_r: float, eta_t: float, n_abstract: int, r_max: float, horizon: Horizon,
                          which: str = "policy_vs_abstract") -> float:
    """|V_ground - V_abstract| for one abstract policy, or between the two optima.

    ``which`` only labels the use ("policy_vs_abstract" or "optimal_pair");
    both share the formula.
    """
    if which not in ("policy_vs_abstract", "optimal_pair"):
        raise InvalidArgumentError(f"unknown bound label {which!r}")
    _nonneg(eta_r=eta_r, eta_t=eta_t, r_max=r_max)
    if horizon.steps is not None:
        h = horizon.steps
        return h * eta_r + (h - 1) * h / 2 * eta_t * n_abstract * r_max
    g = horizon.gamma
    return eta_r / (1 - g) + g * eta_t * n_abstract * r_max / (1 - g) ** 2


def value_loss_theorem1(eta_r: float, eta_t: float, n_abstract: int, r_max: float, horizon: Horizon,
                        stated_form: bool = False) -> float:
    """Loss of the lifted abstract-optimal policy: V*(s) - V^{pi_bar*}(s) <= bound.

    The default finite form has coefficient (h-1)h on eta_T; ``stated_form``
    switches to the looser (h+1)h coefficient.
    """
    if stated_form and horizon.steps is not None:
        _nonneg(eta_r=eta_r, eta_t=eta_t, r_max=r_max)
        h = horizon.steps
        return 2 * h * eta_r + (h + 1) * h * eta_t * n_abstract * r_max
    return 2 * value_gap_abstraction(eta_r, eta_t, n_abstract, r_max, horizon)


def simulation_lemma_bound(eta_r: float, eta_t: float, n_states: int, r_max: float, n: int) -> float:
    """n-step value gap between two MDPs on the same state-action space."""
    _nonneg(eta_r=eta_r, eta_t=eta_t, r_max=r_max)
    return n * eta_r + (n - 1) * n / 2 * eta_t * n_states * r_max


def learned_model_loss(eta_r: float, eta_t: float, eps: float, n_abstract: int, r_max: float, n: int) -> float:
    """Policy loss when the abstract model is learned to L1 accuracy ``eps``."""
    _nonneg(eta_r=eta_r, eta_t=eta_t, eps=eps, r_max=r_max)
    return 2 * n * eta_r + (n - 1) * n * (eta_t + eps) * n_abstract * r_max


def g_function(t_eps: int, eta_r: float, eta_t: float, n_abstract: int, r_max: float) -> float:
    """Abstraction loss over a ``t_eps``-step episode."""
    if t_eps < 1:
        raise InvalidArgumentError("t_eps must be >= 1")
    _nonneg(eta_r=eta_r, eta_t=eta_t, r_max=r_max)
    return t_eps * eta_r + (t_eps - 1) * t_eps / 2 * eta_t * n_abstract * r_max


# R-MAX sample-complexity constants -------------------------------------------


def rmax_k1_threshold(n_abstract: int, n_actions: int, delta: float, eps: float, t_eps: int, r_max: float) -> float:
    log_term = _log_pow2_minus2(n_abstract) - math.log(delta / (3 * n_abstract * n_actions))
    return 32 * n_abstract**2 * r_max**2 * (t_eps - 1) ** 2 * log_term / (9 * eps * eps)


def rmax_k1(n_abstract: int, n_actions: int, delta: float, eps: float, t_eps: int, r_max: float) -> int:
    """Visits per abstract pair before it counts as known."""
    if not 0 < delta < 1 or eps <= 0 or t_eps < 1 or r_max <= 0 or n_abstract < 1 or n_actions < 1:
        raise InvalidArgumentError("need 0 < delta < 1, eps > 0, t_eps >= 1, r_max > 0")
    if t_eps == 1:
        return samples_needed(n_abstract, delta / (3 * n_abstract * n_actions), min(eps, 1.999), "iid_simulator")
    if n_abstract == 1:
        return 1
    threshold = rmax_k1_threshold(n_abstract, n_actions, delta, eps, t_eps, r_max)
    return _smallest_int(lambda k: k >= threshold, max(1, math.floor(threshold)))


def rmax_k2_conditions(k: int, k1: int, n_abstract: int, n_actions: int, eps: float, r_max: float,
                       delta: float) -> tuple[bool, bool]:
    first = (3 * eps / 8) * (k / r_max) - k ** (2.0 / 3.0) >= k1 * n_abstract * n_actions
    second = math.exp(-2 * k ** (1.0 / 3.0)) <= delta / 3
    return first, second


def rmax_k2(k1: int, n_abstract: int, n_actions: int, eps: float, r_max: float, delta: float) -> int:
    """Exploration episodes needed so every pair reaches ``k1`` visits."""
    if min(k1, n_abstract, n_actions) < 1 or eps <= 0 or r_max <= 0 or not 0 < delta < 1:
        raise InvalidArgumentError("rmax_k2 needs positive inputs and 0 < delta < 1")
    # the first left-hand side decreases until its stationary point, then increases
    turn = math.ceil((16 * r_max / (9 * eps)) ** 3)
    a = _smallest_int(lambda k: rmax_k2_conditions(k, k1, n_abstract, n_actions, eps, r_max, delta)[0], max(1, turn))
    b = _smallest_int(lambda k: rmax_k2_conditions(k, k1, n_abstract, n_actions, eps, r_max, delta)[1], 1)
    return max(a, b)


def rmax_k3_conditions(k3: int, eps: float, r_max: float, delta: float) -> tuple[bool, bool]:
    return r_max / k3 ** (1.0 / 3.0) <= eps / 2, math.exp(-2 * k3 ** (1.0 / 3.0)) <= delta / 3


def rmax_k3(n_abstract: int, t_eps: int, eps: float, r_max: float, delta: float) -> int:
    """Exploitation steps ``Z |S_bar| T_eps`` for the averaged return to settle."""
    if n_abstract < 1 or t_eps < 1 or eps <= 0 or r_max <= 0 or not 0 < delta < 1:
        raise InvalidArgumentError("rmax_k3 needs positive inputs and 0 < delta < 1")
    unit = n_abstract * t_eps
    z = _smallest_int(lambda z: all(rmax_k3_conditions(z * unit, eps, r_max, delta)), 1)
    return z * unit


# exact dependence analysis ---------------------------------------------------


@dataclass(frozen=True)
class DependenceReport:
    u: int
    v: int
    joint: float
    product: float
    gap: float

    def to_row(self) -> list:
        return [self.u, self.v, self.joint, self.product, self.gap]


DEPENDENCE_COLUMNS = ("u", "v", "joint", "product", "gap")


def _action_probs(m: GroundMDP, policy, target_action: int) -> np.ndarray:
    """Normalise the policy argument to an ``(S, A)`` action-probability matrix."""
    if policy is None:
        pi = np.zeros((m.n_states, m.n_actions))
        pi[:, target_action] = 1.0
        return pi
    if isinstance(policy, Policy):
        if policy.nonstationary:
            raise InvalidArgumentError("visit analysis needs a stationary policy")
        policy.check(m.n_states, m.n_actions)
        pi = np.zeros((m.n_states, m.n_actions))
        pi[np.arange(m.n_states), policy.table] = 1.0
        return pi
    pi = np.asarray(policy, dtype=np.float64)
    if pi.shape != (m.n_states, m.n_actions) or np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1) > 1e-12):
        raise InvalidArgumentError("policy matrix must be (S, A) with rows on the simplex")
    return pi


def next_visit_matrix(m: GroundMDP, phi: Abstraction, target: tuple[int, int], policy=None) -> np.ndarray:
    """``H[s, x]``: probability that, from ``s``, the next try of ``target`` happens in ground state ``x``.

    Trying the target pair means standing in block ``target[0]`` and choosing
    ``target[1]``. Rows sum to the probability of ever trying it again.
    """
    block, a = target
    pi = _action_probs(m, policy, a)
    vis = pi[:, a] * (phi.state_map == block)
    moves = np.einsum("sa,sat->st", pi, m.transition)
    q = moves - vis[:, None] * m.transition[:, a, :]
    # restrict to states from which a visit is reachable, so I - Q is invertible
    reach = vis > 0
    while True:
        grown = reach | ((q[:, reach] > 0).any(axis=1))
        if np.array_equal(grown, reach):
            break
        reach = grown
    h = np.zeros((m.n_states, m.n_states))
    idx = np.flatnonzero(reach)
    if idx.size:
        sub = np.eye(idx.size) - q[np.ix_(idx, idx)]
        h[np.ix_(idx, idx)] = np.linalg.solve(sub, np.diag(vis[idx]))
    return h


def _visit_pair_joint(m: GroundMDP, phi: Abstraction, start: int, target, policy) -> tuple[np.ndarray, float]:
    h = next_visit_matrix(m, phi, target, policy)
    a = target[1]
    first = h[start]  # law of the ground state at the first visit
    k = phi.n_abstract
    onehot = phi.onehot()
    out = m.transition[:, a, :]  # (S, S)
    second_outcome = h @ (out @ onehot)  # (S, K): from post-visit state s', law of Y2
    joint = np.zeros((k, k))
    for u in range(k):
        # mass over s' after a first visit with outcome u
        post = (first[:, None] * out)[:, onehot[:, u] > 0].sum(axis=0)
        joint[u] = post @ second_outcome[onehot[:, u] > 0]
    return joint, float(joint.sum())


def _visit_pair_joint_enumerated(m, phi, start, target, policy, tol, cap, max_len):
    if policy is None:
        policy = Policy.constant(m.n_states, target[1])
    if not isinstance(policy, Policy):
        raise InvalidArgumentError("enumeration needs a deterministic Policy")
    k = phi.n_abstract
    block, a = target
    for t in range(1, max_len + 1):
        dist = trajectory_distribution(m, start, policy, t, cap=cap)
        blocks = phi.state_map[dist.states]
        hits = (blocks[:, :-1] == block) & (dist.actions == a)
        done = hits.sum(axis=1) >= 2
        unresolved = dist.probs[~done].sum()
        if unresolved <= tol:
            joint = np.zeros((k, k))
            for row, hrow, p in zip(blocks[done], hits[done], dist.probs[done]):
                i, j = np.flatnonzero(hrow)[:2]
                joint[row[i + 1], row[j + 1]] += p
            return joint, float(joint.sum())
    raise ResourceLimitError(f"second visit unresolved (mass > {tol}) after {max_len} steps")


def dependence_report(m: GroundMDP, phi: Abstraction, start: int, target: tuple[int, int], policy=None,
                      method: str = "linear", tol: float = 1e-15, cap: int = DEFAULT_PATH_CAP,
                      max_len: int = 64) -> list[DependenceReport]:
    """Exact joint law of the outcomes of the first two tries of ``target`` versus the product of marginals.

    ``policy`` is a stationary :class:`Policy`, an ``(S, A)`` action-probability
    matrix, or ``None`` (always choose the target action). ``method`` is
    ``"linear"`` (absorbing-chain solve) or ``"enumerate"`` (explicit paths,
    horizon grown until the unresolved mass is at most ``tol``).
    """
    if method == "linear":
        joint, total = _visit_pair_joint(m, phi, start, target, policy)
    elif method == "enumerate":
        joint, total = _visit_pair_joint_enumerated(m, phi, start, target, policy, tol, cap, max_len)
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    if abs(total - 1.0) > 1e-9:
        raise PreconditionError(f"the target pair is tried twice with probability {total:.6g}, not 1")
    first = joint.sum(axis=1)
    second = joint.sum(axis=0)
    k = phi.n_abstract
    reports = []
    for u, v in itertools.product(range(k), range(k)):
        prod = float(first[u] * second[v])
        reports.append(DependenceReport(u, v, float(joint[u, v]), prod, float(joint[u, v]) - prod))
    return reports


def visit_marginals(reports: Sequence[DependenceReport], n_abstract: int) -> tuple[np.ndarray, np.ndarray]:
    """Marginal laws of the first and second outcomes recovered from a report list."""
    joint = np.zeros((n_abstract, n_abstract))
    for r in reports:
        joint[r.u, r.v] = r.joint
    return joint.sum(axis=1), joint.sum(axis=0)


# martingale residuals --------------------------------------------------------


@dataclass(frozen=True)
class MartingaleCheck:
    residuals: dict  # history tuple -> E[Z_next | history]
    probabilities: dict  # history tuple -> Pr(history)
    max_abs_residual: float
    max_abs_increment: float


def _round_key(z: float) -> float:
    return float(round(float(z), 12)) + 0.0


def martingale_check(m: GroundMDP, phi: Abstraction, target: tuple[int, int], z: Sequence[float],
                     depth: int, start: int | None = None, policy=None) -> MartingaleCheck:
    """Exact conditional means of the centred outcome increments.

    For the i-th try of ``target`` from ground state X_i with outcome Y_i the
    increment is ``z(Y_i) - sum_s' T(s'|X_i, a) z(s')``. For every history of
    the first ``i - 1`` increment values (i <= depth) with positive
    probability, returns ``E[Z_i | history]``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (phi.n_abstract,):
        raise InvalidArgumentError("z needs one entry per abstract state")
    if start is None:
        start = 0 if m.start_state is None else m.start_state
    a = target[1]
    h = next_visit_matrix(m, phi, target, policy)
    lifted = lifted_transitions(m, phi)[:, a, :]  # (S, K)
    centre = lifted @ z  # expected z(Y) from each ground source
    out = m.transition[:, a, :]
    zy = z[phi.state_map]  # z of the outcome block of each ground successor
    frontier = {(): h[start].copy()}
    residuals, probs = {}, {}
    max_inc = 0.0
    for _ in range(depth):
        nxt_frontier: dict = {}
        for hist, mu in frontier.items():
            p_hist = mu.sum()
            if p_hist <= 0:
                continue
            # increment Z = zy[s'] - centre[x] for a try from x landing in s'
            inc = zy[None, :] - centre[:, None]  # (S, S)
            weight = mu[:, None] * out
            residuals[hist] = float((weight * inc).sum() / p_hist)
            probs[hist] = float(p_hist)
            support = weight > 0
            if support.any():
                max_inc = max(max_inc, float(np.abs(inc[support]).max()))
            for x, s2 in zip(*np.nonzero(support)):
                key = hist + (_round_key(inc[x, s2]),)
                acc = nxt_frontier.get(key)
                contrib = weight[x, s2] * h[s2]
                nxt_frontier[key] = contrib if acc is None else acc + contrib
        frontier = nxt_frontier
    worst = max((abs(r) for r in residuals.values()), default=0.0)
    return MartingaleCheck(residuals, probs, worst, max_inc)


def martingale_residual(m: GroundMDP, phi: Abstraction, history: Sequence[float], target: tuple[int, int],
                        z: Sequence[float], start: int | None = None, policy=None) -> float:
    """``E[Z_i | Z_1..Z_{i-1} = history]`` for the given history of increment values."""
    key = tuple(_round_key(v) for v in history)
    check = martingale_check(m, phi, target, z, len(key) + 1, start, policy)
    if key not in check.residuals:
        raise InvalidArgumentError(f"history {tuple(history)} has probability zero")
    return check.residuals[key]


def sign_vectors(n: int):
    """All vectors in {-1, +1}^n."""
    for signs in itertools.product((-1.0, 1.0), repeat=n):
        yield np.array(signs)


# explore-or-exploit ------------------------------------------------------------


@dataclass(frozen=True)
class ExploreExploitResult:
    lhs: float
    rhs: float
    escape_probability: float
    holds: bool


def optimistic_extension(m: GroundMDP, known: np.ndarray) -> GroundMDP:
    """Copy of ``m`` where every unknown pair self-loops with reward ``r_max``."""
    known = np.asarray(known, dtype=bool)
    t = m.transition.copy()
    r = m.reward.copy()
    s_idx, a_idx = np.nonzero(~known)
    t[s_idx, a_idx] = 0.0
    t[s_idx, a_idx, s_idx] = 1.0
    r[s_idx, a_idx] = m.r_max
    return GroundMDP(t, r, m.r_max, m.start_state)


def explore_exploit_check(m: GroundMDP, known: np.ndarray, policy: Policy, n: int, start: int,
                          cap: int = DEFAULT_PATH_CAP) -> ExploreExploitResult:
    """Exact check of V_M(s1) >= V_{M_L}(s1) - n R_max Pr(an unknown pair is tried within n steps)."""
    known = np.asarray(known, dtype=bool)
    if known.shape != (m.n_states, m.n_actions):
        raise InvalidArgumentError("known mask must be (S, A)")
    m_l = optimistic_extension(m, known)
    dist = trajectory_distribution(m, start, policy, n, cap=cap)
    escaped = (~known[dist.states[:, :-1], dist.actions]).any(axis=1)
    p_escape = float(dist.probs[escaped].sum())
    lhs = float(value_finite(m, policy, n).values[start])
    rhs = float(value_finite(m_l, policy, n).values[start]) - n * m.r_max * p_escape
    return ExploreExploitResult(lhs, rhs, p_escape, lhs >= rhs - 1e-10)
