"""Self-checks against closed forms and exact solvers.

Each check returns a :class:`CheckResult`; ``ailboost verify`` runs the
exact ones and the acceptance tests import the same functions, so the CLI
and the test suite can never disagree about what passing means.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from ..baselines import DacConfig, run_dac
from ..boosting import SCHEDULES, AilboostConfig, run_ailboost
from ..divergence import (
    ExpertDataset,
    objective_gradient,
    optimal_discriminator,
    reverse_kl,
    train_discriminator,
    variational_objective,
)
from ..ensemble import ensemble_occupancy, init_ensemble, mix_in
from ..mdp import MarkovPolicy, TabularMdp, exact_occupancy, rollouts
from ..replay import StaleWeightsError, TransitionDataset, WeightedReplayBuffer
from .envs import gridworld, toggle2
from .experiments import first_reaching
from .experts import generate_expert


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# ---------------------------------------------------------------------------
# exact checks


def oracle_descent(rounds: int = 200, alpha: float = 0.05, time_limit: float = 60.0) -> CheckResult:
    """Exact-oracle boosting on the deterministic 5x5 grid."""
    mdp = gridworld(5, 5, 0.99)
    data, _, stats = generate_expert(mdp, 1, seed=0)
    cfg = AilboostConfig(rounds=rounds, mix_weight=alpha, oracle_mode=True, seed=0)
    t0 = time.perf_counter()
    _, metrics = run_ailboost(mdp, data, stats.occupancy, cfg)
    elapsed = time.perf_counter() - t0
    kl = np.array([m.reverse_kl for m in metrics])
    gaps = np.array([m.fw_gap for m in metrics])
    ratio = kl[-1] / kl[0]
    monotone = float(np.mean(np.diff(kl) <= 0))
    ok = ratio <= 0.10 and monotone >= 0.95 and gaps.min() >= -1e-9 and elapsed <= time_limit
    return CheckResult(
        "oracle descent",
        bool(ok),
        f"KL {kl[0]:.4g} -> {kl[-1]:.4g} (ratio {ratio:.3g} <= 0.10), nonincreasing in {monotone:.1%} of steps (>= 95%), "
        f"min gap {gaps.min():.3g} (>= -1e-9), {elapsed:.1f}s (<= {time_limit:.0f}s)",
    )


def _finite_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        grad[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


def _fixed_tables(seed: int = 0):
    """Expert and weighted buffer datasets on a 3x2 table where every cell is visited."""
    rng = np.random.default_rng(seed)
    S, A = 3, 2
    cells = np.array([(s, a) for s in range(S) for a in range(A)])
    expert_idx = np.concatenate([np.arange(6), rng.integers(0, 6, size=34)])
    expert = ExpertDataset(cells[expert_idx, 0], cells[expert_idx, 1])
    buffer = WeightedReplayBuffer()
    for n in (20, 30):
        idx = np.concatenate([np.arange(6), rng.integers(0, 6, size=n - 6)])
        s, a = cells[idx, 0], cells[idx, 1]
        buffer.append_dataset(TransitionDataset(s, a, s, np.zeros(n, bool)))
    buffer.set_weights([0.75, 0.25])
    return expert, buffer, (S, A)


def discriminator_correctness() -> CheckResult:
    expert, buffer, (S, A) = _fixed_tables()
    q_hat = expert.empirical(S, A)
    p_hat = buffer.weighted_counts(S, A)

    # (a) analytic gradient against central differences
    g0 = np.random.default_rng(1).normal(scale=0.5, size=(S, A))
    analytic = objective_gradient(g0, q_hat, p_hat)
    numeric = _finite_difference(lambda g: -np.sum(q_hat * np.exp(g)) + np.sum(p_hat * g), g0)
    rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)

    # (b) full-batch training converges to the empirical log ratio
    g = train_discriminator(expert, buffer, steps=5000, lr=1.0, batch_size=None, shape=(S, A)).g
    target = np.log(p_hat / q_hat)
    sup = float(np.max(np.abs(g - target)))

    # (c) value at the maximiser on exact distributions
    d, d_e = np.array([2 / 3, 1 / 3]), np.array([0.5, 0.5])
    closed = (2 / 3) * np.log(4 / 3) + (1 / 3) * np.log(2 / 3)
    gap = abs(variational_objective(optimal_discriminator(d, d_e), d, d_e) - (reverse_kl(d, d_e) - 1))
    gap_closed = abs(reverse_kl(d, d_e) - closed)

    ok = rel <= 1e-5 and sup <= 0.05 and gap <= 1e-9 and gap_closed <= 1e-12
    return CheckResult(
        "discriminator correctness",
        bool(ok),
        f"(a) gradient rel. error {rel:.2g} (<= 1e-5); (b) sup |g - ln(p/q)| {sup:.2g} (<= 0.05); "
        f"(c) |J(g*) - (KL - 1)| {gap:.2g} (<= 1e-9)",
    )


def _random_mdp(rng, S: int, A: int, gamma: float) -> TabularMdp:
    P = rng.dirichlet(np.full(S, 0.3), size=(S, A))
    return TabularMdp(P, gamma, rng.dirichlet(np.ones(S)))


def _random_policy(rng, S: int, A: int) -> MarkovPolicy:
    return MarkovPolicy(rng.dirichlet(np.ones(A), size=S))


def weight_algebra(max_mixes: int = 500) -> CheckResult:
    rng = np.random.default_rng(0)
    worst_w = worst_sum = 0.0
    for alpha in (0.05, 0.3, 0.9):
        ens = init_ensemble(_random_policy(rng, 2, 2))
        for T in range(1, max_mixes + 1):
            ens = mix_in(ens, ens.policies[0], alpha)
            # independent closed form: first weight (1-a)^T, then a(1-a)^(T-i)
            expect = np.array([(1 - alpha) ** T] + [alpha * (1 - alpha) ** (T - i) for i in range(1, T + 1)])
            worst_w = max(worst_w, float(np.max(np.abs(ens.weight_array - expect))))
            worst_sum = max(worst_sum, abs(float(np.sum(ens.weights)) - 1.0))

    worst_lin = 0.0
    for _ in range(20):
        S, A = int(rng.integers(2, 12)), int(rng.integers(2, 5))
        mdp = _random_mdp(rng, S, A, float(rng.uniform(0.5, 0.99)))
        ens = init_ensemble(_random_policy(rng, S, A))
        for _ in range(int(rng.integers(1, 6))):
            ens = mix_in(ens, _random_policy(rng, S, A), float(rng.uniform(0.01, 0.99)))
        alpha = float(rng.uniform(0.01, 0.99))
        new = _random_policy(rng, S, A)
        lhs = ensemble_occupancy(mdp, mix_in(ens, new, alpha)).mass
        rhs = (1 - alpha) * ensemble_occupancy(mdp, ens).mass + alpha * exact_occupancy(mdp, new).mass
        worst_lin = max(worst_lin, float(np.max(np.abs(lhs - rhs))))
    ok = worst_w <= 1e-12 and worst_sum <= 1e-12 and worst_lin <= 1e-10
    return CheckResult(
        "ensemble weight algebra",
        bool(ok),
        f"max weight error {worst_w:.2g}, max |sum - 1| {worst_sum:.2g} (<= 1e-12) over {max_mixes} mixes; "
        f"occupancy linearity error {worst_lin:.2g} (<= 1e-10)",
    )


def occupancy_oracle(n_mdps: int = 100, n_episodes: int = 100_000) -> CheckResult:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(n_mdps):
        S, A = int(rng.integers(1, 51)), int(rng.integers(1, 6))
        mdp = _random_mdp(rng, S, A, float(rng.uniform(0.1, 0.999)))
        pi = _random_policy(rng, S, A)
        d = exact_occupancy(mdp, pi).mass
        # independent flow check: d(s) = (1 - g) mu(s) + g sum_{s', a'} P(s | s', a') d(s', a')
        inflow = (1 - mdp.discount) * mdp.init_dist + mdp.discount * np.einsum("ij,ijk->k", d, mdp.transition)
        worst = max(worst, float(np.max(np.abs(d.sum(axis=1) - inflow))))

    mdp = toggle2(0.5)
    go = MarkovPolicy.deterministic([1, 1], 2)
    counts = np.zeros((n_episodes, 2))
    for k, traj in enumerate(rollouts(mdp, go, n_episodes, "geometric", seed=0)):
        np.add.at(counts[k], traj.states, 1.0)
    est = (1 - mdp.discount) * counts
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / np.sqrt(n_episodes)
    z = np.abs(mean - np.array([2 / 3, 1 / 3])) / se
    ok = worst <= 1e-8 and np.all(z <= 3)
    return CheckResult(
        "occupancy oracle",
        bool(ok),
        f"max flow residual {worst:.2g} over {n_mdps} random MDPs (<= 1e-8); Toggle-2 always-go Monte-Carlo "
        f"d(0,go)={mean[0]:.4f}, d(1,go)={mean[1]:.4f}, |z| = {z[0]:.2f}, {z[1]:.2f} (<= 3)",
    )


def replay_semantics(n_draws: int = 100_000) -> CheckResult:
    buf = WeightedReplayBuffer()
    sets = [([0, 1, 1, 0], [0, 0, 1, 1]), ([1, 1], [1, 0]), ([0, 0, 0, 1, 1, 1, 1, 1], [1] * 8)]
    for s, a in sets:
        buf.append_dataset(TransitionDataset(s, a, s, np.zeros(len(s), bool)))
    weights = [0.5, 0.25, 0.25]
    buf.set_weights(weights)
    table = np.array([[1.0, 2.0], [4.0, 8.0]])
    closed = sum(w * sum(table[si, ai] for si, ai in zip(s, a)) / len(s) for w, (s, a) in zip(weights, sets))
    exact_ok = buf.weighted_expectation(table) == closed

    two = WeightedReplayBuffer()
    for n in (10, 90):
        two.append_dataset(TransitionDataset(np.zeros(n, int), np.zeros(n, int), np.zeros(n, int), np.zeros(n, bool)))
    two.set_weights([0.9, 0.1])
    origins = two.sample_weighted(n_draws, seed=0).origins
    freq = float(np.mean(origins == 0))
    sigma = np.sqrt(0.9 * 0.1 / n_draws)
    z = abs(freq - 0.9) / sigma

    two.append_dataset(TransitionDataset([0], [0], [0], [False]))
    try:
        two.sample_weighted(1, seed=0)
        stale_ok = False
    except StaleWeightsError:
        stale_ok = True
    ok = exact_ok and z <= 3 and stale_ok
    return CheckResult(
        "replay semantics",
        bool(ok),
        f"weighted expectation exact: {exact_ok}; origin frequency {freq:.4f} vs 0.9, |z| = {z:.2f} (<= 3); "
        f"stale sampling rejected: {stale_ok}",
    )


EXACT_CHECKS: Dict[str, Callable[[], CheckResult]] = {
    "oracle": oracle_descent,
    "discriminator": discriminator_correctness,
    "weights": weight_algebra,
    "occupancy": occupancy_oracle,
    "replay": replay_semantics,
}


# ---------------------------------------------------------------------------
# sampled experiments (minutes, not seconds)


def one_trajectory_imitation(seeds=(0, 1, 2), rounds: int = 200, budget: int = 200_000) -> CheckResult:
    mdp = gridworld(5, 5, 0.99)
    best = []
    for seed in seeds:
        data, _, stats = generate_expert(mdp, 1, seed=seed)
        _, metrics = run_ailboost(mdp, data, stats.occupancy, AilboostConfig(rounds=rounds, seed=seed))
        within = [m.normalized_score for m in metrics if m.env_steps <= budget]
        best.append(within[-1])
    mean = float(np.mean(best))
    ok = mean >= 0.90 and min(best) >= 0.80
    scores = ", ".join(f"{b:.3f}" for b in best)
    return CheckResult(
        "one-trajectory imitation",
        bool(ok),
        f"normalized score at {budget} samples per seed [{scores}], mean {mean:.3f} (>= 0.90, each >= 0.80)",
    )


def weighted_vs_unweighted(seeds=(0, 1, 2), rounds: int = 200) -> CheckResult:
    mdp = gridworld(5, 5, 0.99, slip=0.2)
    rows, wins = [], 0
    for seed in seeds:
        data, _, stats = generate_expert(mdp, 5, seed=seed)
        _, ail = run_ailboost(mdp, data, stats.occupancy, AilboostConfig(rounds=rounds, seed=seed))
        _, dac = run_dac(mdp, data, stats.occupancy, DacConfig(rounds=rounds, seed=seed))
        a, d = ail[-1].reverse_kl, dac[-1].reverse_kl
        wins += a <= d
        rows.append(f"seed {seed}: {a:.4f} vs {d:.4f}")
    ok = wins >= 2
    return CheckResult(
        "weighted vs unweighted buffer",
        bool(ok),
        f"final reverse KL AILBoost vs DAC ({'; '.join(rows)}); AILBoost <= DAC on {wins}/{len(seeds)} (need >= 2)",
    )


def schedule_robustness(seeds=(0, 1, 2), rounds: int = 200, threshold: float = 0.8) -> CheckResult:
    mdp = gridworld(5, 5, 0.99)
    first: Dict[str, List] = {name: [] for name in SCHEDULES}
    reached = True
    for seed in seeds:
        data, _, stats = generate_expert(mdp, 5, seed=seed)
        for name, (p, d) in SCHEDULES.items():
            cfg = AilboostConfig(rounds=rounds, seed=seed, policy_steps=p, disc_steps=d)
            _, metrics = run_ailboost(mdp, data, stats.occupancy, cfg)
            hit = first_reaching(metrics, threshold)
            first[name].append(hit)
            reached &= hit is not None
    inf = float("inf")
    slower = sum(
        (a if a is not None else inf) > (b if b is not None else inf)
        for a, b in zip(first["p1000_d1"], first["p1000_d100"])
    )
    ok = reached and slower >= 2
    detail = "; ".join(f"{name} first >= {threshold}: {first[name]}" for name in SCHEDULES)
    return CheckResult(
        "schedule robustness",
        bool(ok),
        f"{detail}; p1000_d1 slower than p1000_d100 on {slower}/{len(seeds)} seeds (need >= 2)",
    )


SAMPLED_CHECKS: Dict[str, Callable[[], CheckResult]] = {
    "imitation": one_trajectory_imitation,
    "buffer": weighted_vs_unweighted,
    "schedules": schedule_robustness,
}


def run_checks(names=None, include_sampled: bool = False, report: Callable[[str], None] = print) -> List[CheckResult]:
    table = dict(EXACT_CHECKS)
    if include_sampled:
        table.update(SAMPLED_CHECKS)
    selected = list(names) if names else list(table)
    results = []
    for name in selected:
        if name not in table:
            raise ValueError(f"unknown check {name!r}; choose from {', '.join(table)}")
        res = table[name]()
        report(res.line())
        results.append(res)
    return results
