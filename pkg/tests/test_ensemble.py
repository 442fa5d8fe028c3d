import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ailboost.ensemble import (
    InvalidEnsembleError,
    PolicyEnsemble,
    closed_form_weights,
    ensemble_occupancy,
    ensemble_rollouts,
    evaluate_ensemble,
    init_ensemble,
    mix_in,
    sample_component,
)
from ailboost.harness.envs import chain
from ailboost.mdp import MarkovPolicy, exact_occupancy, policy_return

from conftest import GO, STAY, random_mdp, random_policy, within_3se


def test_init_has_unit_weight(always_go):
    ens = init_ensemble(always_go)
    assert ens.weights == (1.0,)
    assert len(ens) == 1
    assert ens.policies[0] is always_go


def test_single_mix_halves(always_go, always_stay):
    ens = mix_in(init_ensemble(always_go), always_stay, 0.5)
    assert ens.weights == (0.5, 0.5)


def test_two_mixes_at_half(always_go, always_stay):
    ens = mix_in(mix_in(init_ensemble(always_go), always_stay, 0.5), always_go, 0.5)
    np.testing.assert_allclose(ens.weights, (0.25, 0.25, 0.5), atol=1e-15)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_mix_rejects_alpha_outside_open_interval(always_go, alpha):
    with pytest.raises(ValueError):
        mix_in(init_ensemble(always_go), always_go, alpha)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.floats(0.001, 0.999))
def test_weights_follow_closed_form(T, alpha):
    pi = MarkovPolicy.uniform(1, 1)
    ens = init_ensemble(pi)
    for _ in range(T - 1):
        ens = mix_in(ens, pi, alpha)
    expect = [(1 - alpha) ** (T - 1)] + [alpha * (1 - alpha) ** (T - i) for i in range(2, T + 1)]
    np.testing.assert_allclose(ens.weight_array, expect, atol=1e-12, rtol=0)
    np.testing.assert_allclose(closed_form_weights(T, alpha), expect, atol=1e-12, rtol=0)
    assert abs(sum(ens.weights) - 1) <= 1e-12


def test_component_cap_keeps_most_recent(always_go, always_stay):
    ens = init_ensemble(always_go)
    for k in range(5):
        ens = mix_in(ens, always_stay if k % 2 else always_go, 0.3, max_components=3)
    assert len(ens) == 3
    assert abs(sum(ens.weights) - 1) <= 1e-12


def test_sample_single_component(always_go):
    ens = init_ensemble(always_go)
    assert {sample_component(ens, seed=s) for s in range(20)} == {0}


def test_sample_frequencies(always_go, always_stay):
    ens = mix_in(init_ensemble(always_go), always_stay, 0.5)
    rng = np.random.default_rng(0)
    draws = np.array([sample_component(ens, rng) for _ in range(100_000)])
    assert within_3se(draws == 0, 0.5)


def test_invalid_weights_rejected(always_go, always_stay):
    with pytest.raises(InvalidEnsembleError):
        PolicyEnsemble((0.45, 0.45), (always_go, always_stay)).check()


def test_single_component_occupancy(toggle, always_go):
    np.testing.assert_array_equal(
        ensemble_occupancy(toggle, init_ensemble(always_go)).mass, exact_occupancy(toggle, always_go).mass
    )


def test_toggle_half_half(toggle, always_go, always_stay):
    ens = PolicyEnsemble((0.5, 0.5), (always_stay, always_go))
    d = ensemble_occupancy(toggle, ens).mass
    oracle = 0.5 * np.array([[1.0, 0.0], [0.0, 0.0]]) + 0.5 * np.array([[0.0, 2 / 3], [0.0, 1 / 3]])
    np.testing.assert_allclose(d, oracle, atol=1e-14)
    assert d[0, STAY] == pytest.approx(0.5) and d[0, GO] == pytest.approx(1 / 3) and d[1, GO] == pytest.approx(1 / 6)


def test_mixture_monte_carlo(toggle, always_go, always_stay):
    ens = PolicyEnsemble((0.5, 0.5), (always_stay, always_go))
    d = ensemble_occupancy(toggle, ens).mass
    est = []
    for _, traj in ensemble_rollouts(toggle, ens, 100_000, seed=3):
        c = np.zeros((2, 2))
        np.add.at(c, (traj.states, traj.actions), 1.0)
        est.append((1 - toggle.discount) * c)
    est = np.array(est)
    for s in range(2):
        for a in range(2):
            if d[s, a] > 0:
                assert within_3se(est[:, s, a], d[s, a])
            else:
                assert est[:, s, a].max() == 0


def test_linearity_identity():
    rng = np.random.default_rng(0)
    for _ in range(10):
        mdp = random_mdp(rng, 6, 3)
        ens = init_ensemble(random_policy(rng, 6, 3))
        for _ in range(3):
            ens = mix_in(ens, random_policy(rng, 6, 3), 0.2)
        new = random_policy(rng, 6, 3)
        lhs = ensemble_occupancy(mdp, mix_in(ens, new, 0.3)).mass
        rhs = 0.7 * ensemble_occupancy(mdp, ens).mass + 0.3 * exact_occupancy(mdp, new).mass
        np.testing.assert_allclose(lhs, rhs, atol=1e-10, rtol=0)


def test_evaluate_matches_exact_return():
    mdp = chain(5, 0.9)
    right = MarkovPolicy.deterministic([1] * 5, 2)
    res = evaluate_ensemble(mdp, init_ensemble(right), n_episodes=20_000, seed=4)
    exact = policy_return(mdp, right, mdp.env_reward)
    assert abs(res.mean_return - exact) <= 3 * res.std_error


def test_evaluate_zero_reward(toggle, always_go):
    res = evaluate_ensemble(toggle, init_ensemble(always_go), reward=np.zeros((2, 2)), n_episodes=50, seed=0)
    assert res.mean_return == 0.0 and res.mean_episode_sum == 0.0


def test_evaluate_rejects_zero_episodes(toggle, always_go):
    with pytest.raises(ValueError):
        evaluate_ensemble(toggle, init_ensemble(always_go), n_episodes=0)


def test_horizon_evaluation_reports_both_returns():
    mdp = chain(3, 0.5)
    right = init_ensemble(MarkovPolicy.deterministic([1, 1, 1], 2))
    res = evaluate_ensemble(mdp, right, n_episodes=3, termination="horizon", horizon=4, seed=0)
    # path 0 -> 1 -> 2 -> 2: rewards 0, 0, 1, 1
    assert res.mean_episode_sum == 2.0
    assert res.mean_return == pytest.approx(0.25 + 0.125)
