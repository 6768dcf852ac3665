"""Verification suites driven by experiment configs."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .._kernels import cumulative_rows, online_rollouts, source_draws
from .._rng import trial_keys
from ..abstraction import (
    Abstraction,
    build_abstract_mdp,
    generate_benchmark,
    lifted_transitions,
    measure_similarity,
    random_weighting,
    uniform_weighting,
)
from ..bounds import (
    Horizon,
    abstract_l1_bound,
    dependence_report,
    explore_exploit_check,
    g_function,
    learned_model_loss,
    martingale_check,
    noniid_l1_bound,
    sign_vectors,
    simulation_lemma_bound,
    value_gap_abstraction,
    value_loss_theorem1,
    visit_marginals,
)
from ..errors import ConfigError, PreconditionError
from ..mdp import (
    OPTIMAL,
    GroundMDP,
    Policy,
    evaluate_discounted,
    optimal_gain,
    plan_finite,
    random_mdp,
    value_discounted,
    value_finite,
)
from ..rmax import (
    RMaxConfig,
    optimal_stationary_policy,
    return_mixing_time,
    rmax_abstract_run,
    rmax_baseline_run,
)
from ..sampling import choose_prototype, l1_gaps
from .config import resolve_instance, worker_count
from .report import SuiteReport, binomial_se

# an L1 distance between two distributions can exceed its true value by a few ulps
L1_ROUNDING = 1e-12


def _pool_map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# counterexample ----------------------------------------------------------------


def run_counterexample(doc: dict) -> SuiteReport:
    m, phi = resolve_instance(doc["instance"])
    target = tuple(doc.get("target", (0, 0)))
    tol = doc.get("tolerance", 1e-12)
    start = m.start_state if m.start_state is not None else 0
    reports = dependence_report(m, phi, start, target, method=doc.get("method", "linear"))
    first, second = visit_marginals(reports, phi.n_abstract)
    expected = {(e["u"], e["v"]): e for e in doc.get("expected", [])}
    rep = SuiteReport(doc.get("name", "counterexample"), "counterexample",
                      ["u", "v", "first", "second", "joint", "product", "gap", "checked", "pass"],
                      f"listed expectations met within {tol}")
    for r in reports:
        exp = expected.get((r.u, r.v), {})
        got = {"first": first[r.u], "second": second[r.v], "joint": r.joint, "product": r.product}
        ok = all(abs(got[k] - exp[k]) <= tol for k in got if k in exp)
        rep.add(r.u, r.v, float(first[r.u]), float(second[r.v]), r.joint, r.product, r.gap, bool(exp), passed=ok)
    rep.notes.append(f"max |gap| = {max(abs(r.gap) for r in reports):.6g}")
    return rep


# Monte Carlo concentration -------------------------------------------------------


_MC_COLUMNS = ["n", "eps", "trials", "completed", "failures", "empirical", "se", "bound_raw", "bound_clamped",
               "threshold", "pass"]
_MC_CRITERION = "empirical failure rate <= clamped bound + 3 binomial standard errors"


def _mc_cells(rep: SuiteReport, n: int, gaps: np.ndarray, trials: int, eps_values, bound_fn, n_abstract: int):
    done = gaps.size
    for eps in eps_values:
        fails = int(np.count_nonzero(gaps > eps + L1_ROUNDING))
        p = fails / done if done else float("nan")
        se = binomial_se(p, done)
        b = bound_fn(n_abstract, n, eps)
        threshold = b.clamped + 3 * se
        rep.add(n, float(eps), trials, done, fails, p, se, b.raw, b.clamped, threshold, passed=done > 0 and p <= threshold)


def run_concentration_suite(doc: dict) -> SuiteReport:
    """Online rollouts under uniformly random actions until the target pair has N samples."""
    m, phi = resolve_instance(doc["instance"])
    block, a = doc["target"]
    trials, seed = doc["trials"], doc.get("seed", 0)
    start = doc.get("start", m.start_state if m.start_state is not None else 0)
    step_cap = doc.get("step_cap", 100_000)
    cdf = cumulative_rows(m.transition)
    rows = lifted_transitions(m, phi)[:, a, :]
    rep = SuiteReport(doc.get("name", "concentration"), "concentration", _MC_COLUMNS, _MC_CRITERION)
    for n in doc["n_values"]:
        keys = trial_keys(seed, trials, n)
        y, x, done, _ = online_rollouts(cdf, phi.state_map, phi.n_abstract, start, (block, a), n, keys, step_cap)
        if not done.all():
            rep.notes.append(f"n={n}: {int((~done).sum())} trials hit the step cap and were discarded")
        gaps = l1_gaps(rows, y[done], x[done])
        _mc_cells(rep, n, gaps, trials, doc["eps_values"], abstract_l1_bound, phi.n_abstract)
    return rep


def run_simulator_suite(doc: dict) -> SuiteReport:
    """Independent draws from fixed sources: one prototype, or the block members in turn."""
    m, phi = resolve_instance(doc["instance"])
    block, a = doc["target"]
    trials, seed = doc["trials"], doc.get("seed", 0)
    sampler = doc.get("sampler", "prototype")
    members = phi.blocks[block]
    cdf = cumulative_rows(m.transition)
    rows = lifted_transitions(m, phi)[:, a, :]
    rep = SuiteReport(doc.get("name", "simulator_sampling"), "simulator_sampling", _MC_COLUMNS, _MC_CRITERION)
    for n in doc["n_values"]:
        if sampler == "prototype":
            x0 = choose_prototype(members, a, doc.get("prototype_rule", "lowest"), seed, block)
            sources = np.full(n, x0)
        else:
            sources = np.resize(members, n)
        keys = trial_keys(seed, trials, n)
        y = source_draws(cdf, phi.state_map, phi.n_abstract, sources, a, keys)
        x = np.broadcast_to(np.bincount(sources, minlength=m.n_states), (trials, m.n_states))
        gaps = l1_gaps(rows, y, x)
        _mc_cells(rep, n, gaps, trials, doc["eps_values"], noniid_l1_bound, phi.n_abstract)
    rep.notes.append(f"sampler={sampler}")
    return rep


# value-loss bounds -----------------------------------------------------------------


_VB_COLUMNS = ["instance", "check", "weighting", "horizon", "measured", "bound", "pass"]


def _random_instance(rng: np.random.Generator, doc: dict) -> tuple[GroundMDP, Abstraction]:
    n = int(rng.integers(2, doc.get("max_states", 10) + 1))
    k = int(rng.integers(1, n + 1))
    n_actions = int(rng.integers(1, doc.get("max_actions", 3) + 1))
    sizes = 1 + rng.multinomial(n - k, np.full(k, 1.0 / k))
    exact = rng.random() < doc.get("exact_share", 0.1)
    eta_t = 0.0 if exact else float(rng.uniform(0, doc.get("max_eta_t", 0.3)))
    eta_r = 0.0 if exact else float(rng.uniform(0, doc.get("max_eta_r", 0.3)))
    m, phi = generate_benchmark({
        "n_abstract": k, "block_sizes": sizes.tolist(), "n_actions": n_actions,
        "target_eta_t": eta_t, "target_eta_r": eta_r, "r_max": 1.0, "seed": int(rng.integers(2**31)),
    })
    # relabel ground states so blocks are not contiguous
    perm = rng.permutation(n)  # new index of old state i is perm[i]
    inv = np.argsort(perm)
    t = m.transition[inv][:, :, inv]
    labels = phi.state_map[inv]
    return GroundMDP(t, m.reward[inv], m.r_max), Abstraction.from_labels(labels.tolist())


def _mix_rows(t: np.ndarray, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Rows moved toward random distributions; each entry shifts by at most ``lam``."""
    other = rng.dirichlet(np.ones(t.shape[-1]), size=t.shape[:-1])
    return (1 - lam) * t + lam * other


def _value_bound_cases(args) -> list:
    i, doc = args
    rng = np.random.default_rng([doc.get("seed", 0), i])
    tol = doc.get("tolerance", 1e-9)
    m, phi = _random_instance(rng, doc)
    eta = measure_similarity(m, phi)
    k, r_max = phi.n_abstract, m.r_max
    smap = phi.state_map
    out = []

    def add(check, weighting, horizon, measured, bound):
        out.append([i, check, weighting, horizon, float(measured), float(bound), bool(measured <= bound + tol)])

    weightings = {"uniform": uniform_weighting(phi, m.n_actions), "random": random_weighting(phi, m.n_actions, rng)}
    model_eps = doc.get("model_eps", 0.05)
    for wname, omega in weightings.items():
        bar = build_abstract_mdp(m, phi, omega)
        hat_t = _mix_rows(bar.transition, float(rng.uniform(0, model_eps)), rng)
        hat = GroundMDP(hat_t, bar.reward, r_max)
        eps_model = float(np.abs(hat.transition - bar.transition).max())
        for h in range(1, doc.get("max_horizon", 4) + 1):
            hz = Horizon.finite(h)
            gap = value_gap_abstraction(eta.eta_r, eta.eta_t, k, r_max, hz)
            v_star = value_finite(m, OPTIMAL, h).values
            vbar_star, pi_bar = plan_finite(bar, h)
            v_lift = value_finite(m, pi_bar.lift(smap), h).values
            add("policy_loss", wname, h, np.max(v_star - v_lift), value_loss_theorem1(eta.eta_r, eta.eta_t, k, r_max, hz))
            add("policy_loss_loose", wname, h, np.max(v_star - v_lift),
                value_loss_theorem1(eta.eta_r, eta.eta_t, k, r_max, hz, stated_form=True))
            add("optimal_value_gap", wname, h, np.max(np.abs(v_star - vbar_star.values[smap])), gap)
            pi_rand = Policy(rng.integers(m.n_actions, size=(h, k)))
            for pname, pol in (("optimal", pi_bar), ("random", pi_rand)):
                v_g = value_finite(m, pol.lift(smap), h).values
                v_a = value_finite(bar, pol, h).values[smap]
                add(f"policy_value_gap_{pname}", wname, h, np.max(np.abs(v_g - v_a)), gap)
            pi_hat = plan_finite(hat, h)[1]
            v_hat = value_finite(m, pi_hat.lift(smap), h).values
            add("learned_model_loss", wname, h, np.max(v_star - v_hat),
                learned_model_loss(eta.eta_r, eta.eta_t, eps_model, k, r_max, h))
        for gamma in doc.get("gammas", [0.9, 0.95]):
            hz = Horizon.discounted(gamma)
            gap = value_gap_abstraction(eta.eta_r, eta.eta_t, k, r_max, hz)
            vi_tol = 1e-10
            v_star = value_discounted(m, gamma, tol=vi_tol)[0].values
            vbar_star, pi_bar = value_discounted(bar, gamma, tol=vi_tol)
            v_lift = evaluate_discounted(m, gamma, pi_bar.lift(smap))
            # value iteration is tol-accurate and its greedy policy is 2 gamma tol / (1 - gamma) optimal
            greedy_slack = vi_tol + 2 * gamma * vi_tol / (1 - gamma)
            add("policy_loss", wname, gamma, np.max(v_star - v_lift) - greedy_slack,
                value_loss_theorem1(eta.eta_r, eta.eta_t, k, r_max, hz))
            add("optimal_value_gap", wname, gamma, np.max(np.abs(v_star - vbar_star.values[smap])) - 2 * vi_tol, gap)
            pi_rand = Policy(rng.integers(m.n_actions, size=k))
            v_g = evaluate_discounted(m, gamma, pi_rand.lift(smap))
            v_a = evaluate_discounted(bar, gamma, pi_rand)[smap]
            add("policy_value_gap_random", wname, gamma, np.max(np.abs(v_g - v_a)), gap)

    # two ground MDPs on the same space
    lam = float(rng.uniform(0, model_eps))
    other_t = _mix_rows(m.transition, lam, rng)
    other_r = np.clip(m.reward + rng.uniform(-model_eps, model_eps, size=m.reward.shape), 0, r_max)
    other = GroundMDP(other_t, other_r, r_max)
    d_t = float(np.abs(other.transition - m.transition).max())
    d_r = float(np.abs(other.reward - m.reward).max())
    for h in range(1, doc.get("max_horizon", 4) + 1):
        pol = Policy(rng.integers(m.n_actions, size=(h, m.n_states)))
        diff = np.abs(value_finite(m, pol, h).values - value_finite(other, pol, h).values)
        add("simulation", "-", h, np.max(diff), simulation_lemma_bound(d_r, d_t, m.n_states, r_max, h))
        known = rng.random((m.n_states, m.n_actions)) < 0.5
        res = explore_exploit_check(m, known, pol, h, int(rng.integers(m.n_states)))
        out.append([i, "explore_exploit", "-", h, res.lhs, res.rhs, res.holds])
    return out


def run_value_bound_suite(doc: dict) -> SuiteReport:
    rep = SuiteReport(doc.get("name", "value_bounds"), "value_bounds", _VB_COLUMNS,
                      f"measured gap <= bound + {doc.get('tolerance', 1e-9)} (explore_exploit: lhs >= rhs - 1e-10)")
    for rows in _pool_map(_value_bound_cases, [(i, doc) for i in range(doc["count"])], worker_count()):
        for r in rows:
            rep.add(*r[:-1], passed=r[-1])
    return rep


# martingale residuals -------------------------------------------------------------


def _random_small_instance(rng: np.random.Generator, spec: dict):
    n = int(rng.choice(spec.get("n_states", [3, 4])))
    k = min(int(spec.get("n_abstract", 2)), n)
    n_actions = int(rng.choice(spec.get("n_actions", [1, 2])))
    m = random_mdp(rng, n, n_actions, sparsity=spec.get("sparsity", 0.3), start_state=0)
    labels = rng.permutation(np.concatenate([np.arange(k), rng.integers(k, size=n - k)]))
    phi = Abstraction.from_labels(labels.tolist())
    target = (int(rng.integers(k)), int(rng.integers(n_actions)))
    policy = np.full((n, n_actions), 1.0 / n_actions)
    return m, phi, target, policy


def run_martingale_suite(doc: dict) -> SuiteReport:
    depth, tol = doc["depth"], doc.get("tolerance", 1e-10)
    rep = SuiteReport(doc.get("name", "martingale"), "martingale",
                      ["instance", "z", "histories", "max_abs_residual", "max_abs_increment", "pass"],
                      f"max |E[Z_i | history]| < {tol} and |Z_i| <= 2")
    cases = []
    if "instance" in doc:
        m, phi = resolve_instance(doc["instance"])
        cases.append(("fixture", m, phi, tuple(doc.get("target", (0, 0))), None))
    spec = doc.get("random_instances", {"count": 0})
    for i in range(spec["count"]):
        rng = np.random.default_rng([doc.get("seed", 0), i])
        m, phi, target, policy = _random_small_instance(rng, spec)
        cases.append((f"random-{i}", m, phi, target, policy))
    for label, m, phi, target, policy in cases:
        start = m.start_state if m.start_state is not None else 0
        for z in sign_vectors(phi.n_abstract):
            chk = martingale_check(m, phi, target, z, depth, start, policy)
            ok = chk.max_abs_residual < tol and chk.max_abs_increment <= 2 + 1e-12
            zs = "".join("+" if v > 0 else "-" for v in z)
            rep.add(label, zs, len(chk.residuals), chk.max_abs_residual, chk.max_abs_increment, passed=ok)
    return rep


# R-MAX comparison ----------------------------------------------------------------


def check_ergodic(m: GroundMDP) -> None:
    """Every state reachable from every other under the uniformly random policy."""
    p = m.transition.mean(axis=1) > 0
    reach = p | np.eye(m.n_states, dtype=bool)
    for _ in range(max(1, math.ceil(math.log2(m.n_states)))):
        reach = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
    if not reach.all():
        raise PreconditionError("instance is not ergodic under the uniformly random policy")


def _rmax_pair(args):
    m, phi, cfg = args
    ra = rmax_abstract_run(m, phi, cfg)
    rb = rmax_baseline_run(m, cfg)
    return ra.summary(), rb.summary()


def run_rmax_compare(doc: dict) -> SuiteReport:
    m, phi = resolve_instance(doc["instance"])
    check_ergodic(m)
    eps = doc["eps"]
    eta = measure_similarity(m, phi)
    opt = optimal_gain(m)
    t_eps = doc["t_eps"]
    if t_eps == "auto":
        t_eps = return_mixing_time(m, optimal_stationary_policy(m), opt, eps)
    g = g_function(t_eps, eta.eta_r, eta.eta_t, phi.n_abstract, m.r_max)
    target = opt - 3 * g / t_eps - 2 * eps
    n_seeds = doc["seeds"]
    min_pass = doc.get("min_pass", math.ceil(0.9 * n_seeds))
    base_seed = doc.get("seed", 0)
    cfgs = [RMaxConfig(doc["delta"], eps, t_eps, doc["m_known"], doc.get("max_steps", 10**6),
                       seed=base_seed * 100_003 + i, eval_window=doc.get("eval_window")) for i in range(n_seeds)]
    results = _pool_map(_rmax_pair, [(m, phi, c) for c in cfgs], worker_count())
    rep = SuiteReport(doc.get("name", "rmax_compare"), "rmax_compare",
                      ["seed", "steps_abstract", "steps_baseline", "return_abstract", "return_baseline", "target",
                       "return_ok", "faster", "pass"],
                      f"return >= target and abstract faster, each in >= {min_pass}/{n_seeds} seeds")
    n_ret = n_fast = 0
    for cfg, (ra, rb) in zip(cfgs, results):
        ret_ok = bool(ra["completed"] and ra["post_known_average"] >= target)
        faster = bool(ra["completed"] and (not rb["completed"] or ra["steps_to_all_known"] < rb["steps_to_all_known"]))
        n_ret += ret_ok
        n_fast += faster
        rep.add(cfg.seed, ra["steps_to_all_known"], rb["steps_to_all_known"], ra["post_known_average"],
                rb["post_known_average"], target, ret_ok, faster, passed=ret_ok and faster)
    rep.passed_override = n_ret >= min_pass and n_fast >= min_pass
    rep.notes.append(f"opt_gain={opt!r} t_eps={t_eps} eta_r={eta.eta_r!r} eta_t={eta.eta_t!r} g={g!r}")
    rep.notes.append(f"return_ok={n_ret}/{n_seeds} faster={n_fast}/{n_seeds}")
    return rep


SUITES = {
    "counterexample": run_counterexample,
    "concentration": run_concentration_suite,
    "simulator_sampling": run_simulator_suite,
    "value_bounds": run_value_bound_suite,
    "martingale": run_martingale_suite,
    "rmax_compare": run_rmax_compare,
}


def run_suite(doc: dict) -> SuiteReport:
    """Run the suite named by ``doc['kind']`` (doc must already be validated)."""
    try:
        fn = SUITES[doc["kind"]]
    except KeyError:
        raise ConfigError(f"unknown suite kind {doc.get('kind')!r}") from None
    t0 = time.perf_counter()
    rep = fn(doc)
    rep.runtime = time.perf_counter() - t0
    return rep
