"""State abstractions, weighting functions and abstract-MDP construction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ContractViolationError, DomainError, InvalidArgumentError
from .mdp import GroundMDP

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Abstraction:
    """Surjective map from ground states onto ``range(n_abstract)``."""

    state_map: np.ndarray
    n_abstract: int
    blocks: tuple = field(init=False, repr=False)

    def __post_init__(self):
        sm = np.array(self.state_map, dtype=np.int64, copy=True)
        k = int(self.n_abstract)
        if sm.ndim != 1 or sm.size == 0:
            raise InvalidArgumentError("state_map must be a non-empty 1-D array")
        if k < 1 or sm.min() < 0 or sm.max() >= k:
            raise InvalidArgumentError(f"state_map values must lie in [0, {k})")
        counts = np.bincount(sm, minlength=k)
        if np.any(counts == 0):
            raise InvalidArgumentError(f"abstraction is not surjective: empty blocks {np.flatnonzero(counts == 0).tolist()}")
        sm.setflags(write=False)
        blocks = []
        for b in range(k):
            members = np.flatnonzero(sm == b)
            members.setflags(write=False)
            blocks.append(members)
        object.__setattr__(self, "state_map", sm)
        object.__setattr__(self, "n_abstract", k)
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def n_states(self) -> int:
        return self.state_map.size

    def __call__(self, s: int) -> int:
        return int(self.state_map[s])

    @classmethod
    def identity(cls, n_states: int) -> "Abstraction":
        return cls(np.arange(n_states), n_states)

    @classmethod
    def from_labels(cls, labels: Sequence) -> "Abstraction":
        """Build from arbitrary block labels, numbering blocks by smallest member."""
        order: dict = {}
        mapped = [order.setdefault(lab, len(order)) for lab in labels]
        return cls(np.array(mapped), len(order))

    def onehot(self) -> np.ndarray:
        """``(S, K)`` membership matrix."""
        out = np.zeros((self.n_states, self.n_abstract))
        out[np.arange(self.n_states), self.state_map] = 1.0
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"map": self.state_map.tolist(), "n_abstract": self.n_abstract}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Abstraction":
        try:
            return cls(np.asarray(doc["map"]), int(doc["n_abstract"]))
        except KeyError as exc:
            raise InvalidArgumentError(f"abstraction document lacks {exc}") from exc


@dataclass(frozen=True, eq=False)
class WeightingFn:
    """Action-specific weights ``weight[s, a]`` over the members of each block.

    ``defined[b, a]`` marks the (block, action) pairs inside the function's
    domain; pairs outside it (e.g. unvisited pairs of an empirical weighting)
    cannot be queried.
    """

    weight: np.ndarray
    defined: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64, copy=True)
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        if self.defined is not None:
            d = np.array(self.defined, dtype=bool, copy=True)
            d.setflags(write=False)
            object.__setattr__(self, "defined", d)

    def is_defined(self, block: int, a: int) -> bool:
        return self.defined is None or bool(self.defined[block, a])

    def at(self, phi: Abstraction, s: int, a: int) -> float:
        if not self.is_defined(phi(s), a):
            raise DomainError(f"weighting undefined for abstract pair ({phi(s)}, {a})")
        return float(self.weight[s, a])

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"weight": self.weight.tolist()}
        if self.defined is not None:
            doc["defined"] = self.defined.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "WeightingFn":
        return cls(np.asarray(doc["weight"]), doc.get("defined"))


class AbstractModel(GroundMDP):
    """An MDP over abstract states (constructed, empirical or optimistic)."""

    @property
    def n_abstract(self) -> int:
        return self.n_states


@dataclass(frozen=True)
class SimilarityErrors:
    eta_r: float
    eta_t: float


def uniform_weighting(phi: Abstraction, n_actions: int) -> WeightingFn:
    sizes = np.array([len(b) for b in phi.blocks], dtype=np.float64)
    w = np.repeat((1.0 / sizes[phi.state_map])[:, None], n_actions, axis=1)
    return WeightingFn(w)


def random_weighting(phi: Abstraction, n_actions: int, rng: np.random.Generator) -> WeightingFn:
    w = np.zeros((phi.n_states, n_actions))
    for members in phi.blocks:
        w[members] = rng.dirichlet(np.ones(len(members)), size=n_actions).T
    return WeightingFn(w)


def _check_index(m: GroundMDP, s: int, a: int) -> None:
    if not (0 <= s < m.n_states and 0 <= a < m.n_actions):
        raise InvalidArgumentError(f"index (s={s}, a={a}) out of range")


def lifted_transitions(m: GroundMDP, phi: Abstraction) -> np.ndarray:
    """``(S, A, K)`` array of T(s̄'|s,a), summing ground mass per target block."""
    if phi.n_states != m.n_states:
        raise InvalidArgumentError(f"abstraction covers {phi.n_states} states, MDP has {m.n_states}")
    out = np.empty((m.n_states, m.n_actions, phi.n_abstract))
    for b, members in enumerate(phi.blocks):
        out[:, :, b] = m.transition[:, :, members].sum(axis=2)
    return out


def lift_transition(m: GroundMDP, phi: Abstraction, s: int, a: int) -> np.ndarray:
    """Probability of landing in each abstract state from ground pair (s, a)."""
    _check_index(m, s, a)
    row = m.transition[s, a]
    return np.array([row[members].sum() for members in phi.blocks])


def validate_weighting(omega: WeightingFn, phi: Abstraction) -> list[str]:
    """List violations of the weighting constraints on the function's domain."""
    w = omega.weight
    problems = []
    if w.shape[0] != phi.n_states:
        return [f"weighting covers {w.shape[0]} states, abstraction has {phi.n_states}"]
    for s, a in zip(*np.nonzero((w < 0) | (w > 1) | ~np.isfinite(w))):
        if omega.is_defined(phi(s), a):
            problems.append(f"weight({s},{a}) = {w[s, a]!r} outside [0, 1]")
    for b, members in enumerate(phi.blocks):
        for a in range(w.shape[1]):
            if not omega.is_defined(b, a):
                continue
            total = w[members, a].sum()
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                problems.append(f"weights of block {b} under action {a} sum to {total!r}, not 1")
    return problems


def build_abstract_mdp(m: GroundMDP, phi: Abstraction, omega: WeightingFn,
                       default: np.ndarray | None = None) -> AbstractModel:
    """Weighted-average abstract MDP of ``m`` under ``phi`` and ``omega``.

    Pairs outside a partial weighting's domain take rows from ``default``
    ``(K, A, K)`` (reward 0); without one they are a contract violation.
    """
    problems = validate_weighting(omega, phi)
    if problems:
        raise ContractViolationError("invalid weighting: " + "; ".join(problems))
    if default is None and omega.defined is not None and not omega.defined.all():
        b, a = map(int, np.argwhere(~omega.defined)[0])
        raise ContractViolationError(f"weighting undefined for abstract pair ({b}, {a})")
    lifted = lifted_transitions(m, phi)
    k = phi.n_abstract
    t_bar = np.empty((k, m.n_actions, k))
    r_bar = np.empty((k, m.n_actions))
    for b, members in enumerate(phi.blocks):
        w = omega.weight[members]  # (|b|, A)
        r_bar[b] = (w * m.reward[members]).sum(axis=0)
        t_bar[b] = (w[:, :, None] * lifted[members]).sum(axis=0)
    if omega.defined is not None and default is not None:
        t_bar[~omega.defined] = np.asarray(default)[~omega.defined]
        r_bar[~omega.defined] = 0.0
    return AbstractModel(t_bar, r_bar, m.r_max)


def measure_similarity(m: GroundMDP, phi: Abstraction) -> SimilarityErrors:
    """Tightest (eta_R, eta_T) for which ``phi`` is an approximate model similarity."""
    lifted = lifted_transitions(m, phi)
    eta_r = eta_t = 0.0
    for members in phi.blocks:
        if len(members) < 2:
            continue
        r = m.reward[members]
        eta_r = max(eta_r, float((r.max(axis=0) - r.min(axis=0)).max()))
        t = lifted[members]
        eta_t = max(eta_t, float((t.max(axis=0) - t.min(axis=0)).max()))
    return SimilarityErrors(eta_r, eta_t)


def premise_errors(m: GroundMDP, phi: Abstraction, model: GroundMDP) -> SimilarityErrors:
    """Tightest constants with |T̄(s̄'|φ(s),a) - T(s̄'|s,a)| <= eta_T and |R̄ - R| <= eta_R."""
    lifted = lifted_transitions(m, phi)
    t_bar = model.transition[phi.state_map]
    r_bar = model.reward[phi.state_map]
    return SimilarityErrors(float(np.abs(r_bar - m.reward).max()), float(np.abs(t_bar - lifted).max()))


# benchmark generator ---------------------------------------------------------

_QUANT = 2**20


@dataclass(frozen=True)
class BenchmarkSpec:
    n_abstract: int
    block_sizes: tuple
    n_actions: int
    target_eta_t: float
    target_eta_r: float
    r_max: float = 1.0
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "BenchmarkSpec":
        return cls(
            n_abstract=int(doc["n_abstract"]),
            block_sizes=tuple(int(b) for b in doc["block_sizes"]),
            n_actions=int(doc["n_actions"]),
            target_eta_t=float(doc["target_eta_t"]),
            target_eta_r=float(doc["target_eta_r"]),
            r_max=float(doc.get("r_max", 1.0)),
            seed=int(doc.get("seed", 0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_abstract": self.n_abstract,
            "block_sizes": list(self.block_sizes),
            "n_actions": self.n_actions,
            "target_eta_t": self.target_eta_t,
            "target_eta_r": self.target_eta_r,
            "r_max": self.r_max,
            "seed": self.seed,
        }


def _bounded_zero_sum(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # integer offsets with lo <= d <= hi and sum(d) == 0; requires lo <= 0 <= hi
    d = np.array([rng.integers(l, h + 1) for l, h in zip(lo, hi)], dtype=np.int64)
    excess = int(d.sum())
    for j in rng.permutation(len(d)):
        if excess == 0:
            break
        if excess > 0:
            step = min(excess, d[j] - lo[j])
            d[j] -= step
            excess -= step
        else:
            step = min(-excess, hi[j] - d[j])
            d[j] += step
            excess += step
    return d


def generate_benchmark(spec: BenchmarkSpec | Mapping[str, Any]) -> tuple[GroundMDP, Abstraction]:
    """Random (MDP, abstraction) pair whose measured errors respect the targets.

    Each abstract pair gets a prototype row; every ground member perturbs it by
    at most ``target_eta_t / 2`` per abstract target (zero-sum, staying inside
    [0, 1]) and splits each target's mass across that block's ground states.
    Probabilities are multiples of 2**-20, so block sums are exact.
    """
    if not isinstance(spec, BenchmarkSpec):
        spec = BenchmarkSpec.from_dict(spec)
    k, sizes = spec.n_abstract, np.asarray(spec.block_sizes, dtype=np.int64)
    if k < 1 or sizes.shape != (k,) or np.any(sizes < 1) or spec.n_actions < 1:
        raise InvalidArgumentError("need n_abstract >= 1 and one positive block size per abstract state")
    if not 0.0 <= spec.target_eta_t <= 2.0:
        raise InvalidArgumentError(f"target_eta_t must lie in [0, 2], got {spec.target_eta_t}")
    if not 0.0 < spec.r_max or not 0.0 <= spec.target_eta_r <= spec.r_max:
        raise InvalidArgumentError("target_eta_r must lie in [0, r_max] with r_max > 0")

    rng = np.random.default_rng(spec.seed)
    n_actions, q = spec.n_actions, _QUANT
    state_map = np.repeat(np.arange(k), sizes)
    phi = Abstraction(state_map, k)
    n = state_map.size
    cap_t = int(np.floor(spec.target_eta_t * q / 2))
    cap_r = int(np.floor(spec.target_eta_r * q / (2 * spec.r_max) * (1 - 1e-9)))

    counts = np.zeros((n, n_actions, n), dtype=np.int64)
    rq = np.zeros((n, n_actions), dtype=np.int64)
    for b in range(k):
        for a in range(n_actions):
            proto = rng.multinomial(q, rng.dirichlet(np.ones(k)))
            proto_r = int(rng.integers(0, q + 1))
            for s in phi.blocks[b]:
                lo = np.maximum(-cap_t, -proto)
                hi = np.minimum(cap_t, q - proto)
                row = proto + _bounded_zero_sum(rng, lo, hi)
                for target, members in enumerate(phi.blocks):
                    counts[s, a, members] = rng.multinomial(row[target], rng.dirichlet(np.ones(len(members))))
                rq[s, a] = int(np.clip(proto_r + rng.integers(-cap_r, cap_r + 1), 0, q))
    mdp = GroundMDP(counts / q, spec.r_max * rq / q, spec.r_max, start_state=0)
    return mdp, phi
