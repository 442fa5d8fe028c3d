import itertools

import numpy as np
import pytest

from ailboost.boosting import (
    AilboostConfig,
    NonFiniteError,
    normalized_score,
    run_ailboost,
    weak_learner_update,
)
from ailboost.divergence import ExpertDataset, optimal_discriminator
from ailboost.ensemble import ensemble_occupancy
from ailboost.harness.envs import chain, gridworld
from ailboost.harness.experts import generate_expert
from ailboost.mdp import MarkovPolicy, TabularMdp, exact_occupancy, soft_value_iteration
from ailboost.replay import TransitionDataset, WeightedReplayBuffer


def _full_coverage_buffer(mdp, n_per_cell=40, seed=0):
    rng = np.random.default_rng(seed)
    S, A = mdp.shape
    s = np.repeat(np.arange(S), A * n_per_cell)
    a = np.tile(np.repeat(np.arange(A), n_per_cell), S)
    s2 = np.array([rng.choice(S, p=mdp.transition[x, y]) for x, y in zip(s, a)])
    buf = WeightedReplayBuffer().append_dataset(TransitionDataset(s, a, s2, np.zeros(len(s), bool)))
    return buf.set_weights([1.0])


@pytest.fixture(scope="module")
def small_task():
    mdp = gridworld(3, 3, 0.9)
    data, _, stats = generate_expert(mdp, 3, seed=0)
    return mdp, data, stats


class TestConfig:
    @pytest.mark.parametrize(
        "field,value", [("rounds", 0), ("mix_weight", 1.0), ("mix_weight", 0.0), ("disc_lr", 0.0), ("termination", "x")]
    )
    def test_rejects_invalid(self, field, value):
        with pytest.raises(ValueError):
            AilboostConfig(**{field: value})

    def test_defaults_follow_reference_hyperparameters(self):
        cfg = AilboostConfig()
        assert (cfg.mix_weight, cfg.samples_per_round, cfg.rounds, cfg.disc_steps) == (0.05, 1000, 100, 100)
        assert (cfg.policy_steps, cfg.batch_size, cfg.clip_bound) == (1000, 256, 10.0)


class TestNormalizedScore:
    def test_anchor_points(self):
        assert normalized_score(10.0, 10.0, 2.0) == 1
        assert normalized_score(2.0, 10.0, 2.0) == 0
        assert normalized_score(6.0, 10.0, 2.0) == 0.5

    def test_degenerate(self):
        with pytest.raises(ValueError):
            normalized_score(1.0, 3.0, 3.0)


class TestWeakLearner:
    def test_zero_reward_large_temperature_is_uniform(self):
        mdp = chain(4, 0.9)
        buf = _full_coverage_buffer(mdp)
        res = weak_learner_update(mdp, MarkovPolicy.uniform(4, 2), buf, np.zeros((4, 2)), 200, 1e3, seed=0)
        assert np.max(0.5 * np.abs(res.policy.probs - 0.5).sum(axis=1)) <= 1e-3

    def test_zero_steps_returns_warm_start(self):
        mdp = chain(4, 0.9)
        pi = MarkovPolicy(np.array([[0.3, 0.7]] * 4))
        res = weak_learner_update(mdp, pi, _full_coverage_buffer(mdp), np.ones((4, 2)), 0, 0.05, seed=0)
        assert res.policy is pi

    def test_warm_start_q_reproduces_policy(self):
        mdp = chain(4, 0.9)
        pi = MarkovPolicy(np.array([[0.3, 0.7], [0.5, 0.5], [0.9, 0.1], [0.2, 0.8]]))
        res = weak_learner_update(mdp, pi, _full_coverage_buffer(mdp), np.zeros((4, 2)), 0, 0.05)
        from ailboost.mdp import softmax_policy

        np.testing.assert_allclose(softmax_policy(res.q_values, 0.05).probs, pi.probs, atol=1e-12)

    def test_converges_to_soft_value_iteration(self):
        rng = np.random.default_rng(1)
        S, A = 5, 2
        P = rng.dirichlet(np.full(S, 0.5), size=(S, A))
        mdp = TabularMdp(P, 0.8, np.full(S, 1 / S))
        reward = rng.uniform(-1, 1, size=(S, A))
        tau = 0.5
        target = soft_value_iteration(mdp, reward, tau, iters=3000).greedy_policy.probs
        # TD on a fixed buffer solves the empirical model; 2000 draws per cell keep that close to the true one,
        # and the small step size keeps the minibatch noise floor below the tolerance
        buf = _full_coverage_buffer(mdp, n_per_cell=2000, seed=2)
        res = weak_learner_update(mdp, MarkovPolicy.uniform(S, A), buf, reward, 10_000, tau, lr_q=0.02, seed=3)
        tv = 0.5 * np.abs(res.policy.probs - target).sum(axis=1)
        assert tv.max() <= 1e-2

    def test_rejects_empty_buffer(self):
        mdp = chain(3)
        with pytest.raises(ValueError):
            weak_learner_update(mdp, MarkovPolicy.uniform(3, 2), WeightedReplayBuffer(), np.zeros((3, 2)), 1, 0.1)


class TestLoop:
    def test_one_round_weights(self, small_task):
        mdp, data, stats = small_task
        ens, metrics = run_ailboost(mdp, data, stats.occupancy, AilboostConfig(rounds=1, policy_steps=20, seed=0))
        np.testing.assert_allclose(ens.weights, (0.95, 0.05), atol=1e-15)
        assert len(metrics) == 1

    def test_metrics_length_and_steps(self, small_task):
        mdp, data, stats = small_task
        cfg = AilboostConfig(rounds=6, samples_per_round=300, policy_steps=50, seed=1)
        _, metrics = run_ailboost(mdp, data, stats.occupancy, cfg)
        assert [m.round for m in metrics] == list(range(1, 7))
        assert [m.env_steps for m in metrics] == [300 * k for k in range(1, 7)]

    def test_buffer_weights_track_ensemble_and_occupancy_bookkeeping(self, small_task):
        mdp, data, stats = small_task
        trace = []
        cfg = AilboostConfig(rounds=8, samples_per_round=200, policy_steps=30, seed=2)
        ens, _ = run_ailboost(mdp, data, stats.occupancy, cfg, trace=trace)
        for t, rec in enumerate(trace, start=1):
            expect = [(0.95) ** (t - 1)] + [0.05 * 0.95 ** (t - i) for i in range(2, t + 1)]
            np.testing.assert_allclose(rec["buffer_weights"], expect, atol=1e-12)
        np.testing.assert_allclose(trace[-1]["occupancy"], ensemble_occupancy(mdp, ens).mass, atol=1e-10)

    def test_lagged_flag_drops_newest_dataset(self, small_task):
        mdp, data, stats = small_task
        trace = []
        cfg = AilboostConfig(rounds=3, samples_per_round=200, policy_steps=10, weight_sync="lagged", seed=0)
        run_ailboost(mdp, data, stats.occupancy, cfg, trace=trace)
        np.testing.assert_allclose(trace[0]["buffer_weights"], [1.0])
        np.testing.assert_allclose(trace[1]["buffer_weights"], [1.0, 0.0])
        np.testing.assert_allclose(trace[2]["buffer_weights"], [0.95, 0.05, 0.0], atol=1e-15)

    def test_seed_determinism(self, small_task):
        mdp, data, stats = small_task
        cfg = AilboostConfig(rounds=4, samples_per_round=200, policy_steps=30, seed=5)
        a = run_ailboost(mdp, data, stats.occupancy, cfg)[1]
        b = run_ailboost(mdp, data, stats.occupancy, cfg)[1]
        assert a == b

    def test_non_finite_guard_keeps_partial_metrics(self, small_task, monkeypatch):
        mdp, data, stats = small_task
        import ailboost.boosting as boosting

        real = boosting.weak_learner_update
        calls = {"n": 0}

        def flaky(*args, **kwargs):
            res = real(*args, **kwargs)
            calls["n"] += 1
            if calls["n"] == 3:
                res.q_values[0, 0] = np.nan
            return res

        monkeypatch.setattr(boosting, "weak_learner_update", flaky)
        with pytest.raises(NonFiniteError) as info:
            run_ailboost(mdp, data, stats.occupancy, AilboostConfig(rounds=5, samples_per_round=100, policy_steps=5))
        assert len(info.value.metrics) == 2
        assert np.isnan(info.value.dump["Q"][0, 0])

    def test_rejects_empty_expert(self, small_task):
        mdp, _, stats = small_task
        with pytest.raises(ValueError):
            run_ailboost(mdp, ExpertDataset([], []), stats.occupancy, AilboostConfig(rounds=1))

    def test_without_expert_occupancy_metrics_are_nan(self, small_task):
        mdp, data, _ = small_task
        _, metrics = run_ailboost(mdp, data, None, AilboostConfig(rounds=2, samples_per_round=100, policy_steps=5))
        assert np.isnan(metrics[-1].reverse_kl) and np.isfinite(metrics[-1].disc_objective)


def _three_state_instances(n, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        P = rng.dirichlet(np.full(3, 0.5), size=(3, 2))
        yield TabularMdp(P, 0.8, rng.dirichlet(np.ones(3)), rng.normal(size=(3, 2)))


def test_oracle_gap_nonnegative_and_best_response_exact():
    """In oracle mode the weak learner is the best deterministic response, so the gap is nonnegative."""
    for mdp in _three_state_instances(4):
        expert = MarkovPolicy.deterministic(np.argmax(mdp.env_reward, axis=1), 2)
        d_e = exact_occupancy(mdp, expert)
        data = ExpertDataset([0], [int(expert.probs[0].argmax())])
        trace = []
        cfg = AilboostConfig(rounds=15, oracle_mode=True, samples_per_round=10, seed=0)
        _, metrics = run_ailboost(mdp, data, d_e, cfg, trace=trace)
        assert min(m.fw_gap for m in metrics) >= -1e-9
        all_det = [MarkovPolicy.deterministic(acts, 2) for acts in itertools.product(range(2), repeat=3)]
        occs = [exact_occupancy(mdp, p).mass for p in all_det]
        for rec in trace:
            values = [float(np.sum(o * -rec["g"])) for o in occs]
            got = float(np.sum(rec["new_occupancy"] * -rec["g"]))
            assert got >= max(values) - 1e-6


def test_oracle_mode_uses_exact_discriminator():
    mdp = gridworld(3, 3, 0.9)
    data, _, stats = generate_expert(mdp, 1, seed=0)
    trace = []
    run_ailboost(mdp, data, stats.occupancy, AilboostConfig(rounds=3, oracle_mode=True), trace=trace)
    prev = exact_occupancy(mdp, MarkovPolicy.uniform(*mdp.shape)).mass
    for rec in trace:
        np.testing.assert_array_equal(rec["g"], optimal_discriminator(prev, stats.occupancy).g)
        prev = rec["occupancy"]
