import io
import os

import numpy as np
import pytest

from ailboost.boosting import SCHEDULE_LABELS, SCHEDULES, IterationMetrics
from ailboost.ensemble import PolicyEnsemble, init_ensemble, mix_in
from ailboost.harness.cli import main
from ailboost.harness.config import ConfigError, default_config, format_config, load_config, parse_config
from ailboost.harness.envs import ENV_NAMES, EnvSpec, build_env, chain, gridworld
from ailboost.harness.experiments import first_reaching, run_algorithm, sweep_schedules
from ailboost.harness.experts import expert_stats, finite_horizon_return, generate_expert
from ailboost.harness.io import (
    METRICS_HEADER,
    FormatError,
    MetricsWriter,
    format_dataset,
    format_ensemble,
    parse_dataset,
    parse_ensemble,
    parse_metrics,
    read_metrics,
    truncate_partial_row,
)
from ailboost.mdp import MarkovPolicy, policy_return, validate_mdp

TINY = """\
# small, fast experiment
[experiment]
algo = ailboost
expert_trajs = 1
seeds = 0, 1

[env]
name = gridworld
rows = 3
cols = 3
gamma = 0.9

[algo]
rounds = 3
samples_per_round = 100
policy_steps = 20
disc_steps = 10
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


class TestEnvs:
    def test_chain_shape(self):
        assert chain(5).shape == (5, 2)

    def test_grid_shape(self):
        assert gridworld(5, 5).shape == (25, 4)

    def test_slip_rows(self):
        mdp = build_env(EnvSpec("gridworld_slip", {"rows": "5", "cols": "5", "slip": "0.2"}))
        validate_mdp(mdp)
        # centre cell (2, 2) = index 12, action right: (2, 3) w.p. 0.8, up (1, 2) and down (3, 2) w.p. 0.1
        row = mdp.transition[12, 1]
        assert row[13] == pytest.approx(0.8) and row[7] == pytest.approx(0.1) and row[17] == pytest.approx(0.1)
        np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)

    @pytest.mark.parametrize("name", ENV_NAMES)
    def test_all_named_envs_validate(self, name):
        validate_mdp(build_env(EnvSpec(name)))

    def test_malformed_specs(self):
        with pytest.raises(ValueError):
            build_env(EnvSpec("gridworld", {"slip": "0.3"}))
        with pytest.raises(ValueError):
            build_env(EnvSpec("nowhere"))
        with pytest.raises(ValueError):
            gridworld(3, 3, goal=(5, 5))


class TestExperts:
    def test_toggle_expert_return(self, toggle):
        stats = expert_stats(toggle)
        # go, then stay: V(0) = gamma * 1 / (1 - gamma) = 1 at gamma = 0.5
        assert stats.expert_return == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(np.argmax(stats.policy.probs, axis=1), [1, 0])

    def test_toggle_random_return_by_direct_solve(self, toggle):
        # uniform policy: V = r_pi + gamma P_pi V with P_pi = 1/2 everywhere
        P_pi = np.full((2, 2), 0.5)
        V = np.linalg.solve(np.eye(2) - 0.5 * P_pi, np.array([0.0, 1.0]))
        assert expert_stats(toggle).random_return == pytest.approx(V[0], abs=1e-12)

    def test_finite_horizon_limit(self):
        mdp = chain(4, 0.9)
        pi = MarkovPolicy.uniform(4, 2)
        assert finite_horizon_return(mdp, pi, mdp.env_reward, 2000) == pytest.approx(
            policy_return(mdp, pi, mdp.env_reward), abs=1e-10
        )
        assert finite_horizon_return(mdp, pi, mdp.env_reward, 0) == 0.0

    def test_zero_trajectories_rejected(self, toggle):
        with pytest.raises(ValueError):
            generate_expert(toggle, 0, seed=0)

    def test_missing_reward_rejected(self, toggle):
        from ailboost.mdp import TabularMdp

        bare = TabularMdp(toggle.transition, toggle.discount, toggle.init_dist)
        with pytest.raises(ValueError):
            generate_expert(bare, 1, seed=0)

    def test_fixed_seed_identical_bytes(self):
        mdp = gridworld(4, 4, 0.95)
        texts = [format_dataset(generate_expert(mdp, 5, seed=7)[1], mdp.name, mdp.discount) for _ in range(2)]
        assert texts[0] == texts[1]


class TestFormats:
    def test_dataset_round_trip(self):
        mdp = gridworld(3, 3, 0.9, slip=0.1)
        _, trajs, _ = generate_expert(mdp, 4, seed=3)
        text = format_dataset(trajs, mdp.name, mdp.discount)
        header, back = parse_dataset(text)
        assert header["gamma"] == 0.9 and header["records"] == sum(len(t) for t in trajs)
        assert format_dataset(back, mdp.name, mdp.discount) == text
        for a, b in zip(trajs, back):
            assert a.steps == b.steps

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "version=2 env=x gamma=0.9 records=0\n",
            "version=1 env=x gamma=0.9 records=2\n0 0 0 0 0.0 0 0\n",
            "version=1 env=x gamma=0.9 records=1\n0 0 0 0 0.0 0\n",
            "version=1 env=x gamma=0.9 records=1\n1 0 0 0 0.0 0 0\n",
        ],
    )
    def test_dataset_schema_violations(self, text):
        with pytest.raises(FormatError):
            parse_dataset(text)

    def test_ensemble_round_trip(self):
        rng = np.random.default_rng(0)
        ens = init_ensemble(MarkovPolicy(rng.dirichlet(np.ones(3), size=4)))
        for _ in range(4):
            ens = mix_in(ens, MarkovPolicy(rng.dirichlet(np.ones(3), size=4)), 0.3)
        back = parse_ensemble(format_ensemble(ens))
        assert back.weights == ens.weights
        for p, q in zip(back.policies, ens.policies):
            np.testing.assert_array_equal(p.probs, q.probs)

    def test_ensemble_bad_weights(self):
        pi = MarkovPolicy.uniform(2, 2)
        text = format_ensemble(PolicyEnsemble((0.5, 0.5), (pi, pi))).replace("alpha=0.5", "alpha=0.4", 1)
        with pytest.raises(ValueError):
            parse_ensemble(text)

    def test_metrics_rows_follow_header(self):
        buf = io.StringIO()
        w = MetricsWriter(buf)
        w.write("ailboost", "gridworld", 3, IterationMetrics(1, 100, 0.5, -0.9, 0.2, 0.1, float("nan")))
        lines = buf.getvalue().splitlines()
        assert lines[0] == ",".join(METRICS_HEADER)
        assert len(lines[1].split(",")) == len(METRICS_HEADER)
        rec = parse_metrics(buf.getvalue())[0]
        assert rec["seed"] == 3 and rec["env_steps"] == 100 and np.isnan(rec["fw_gap"])

    def test_interrupted_metrics_file(self, tmp_path):
        good = ",".join(METRICS_HEADER) + "\nailboost,g,0,1,10,0.1,0.2,0.3,0.4,0.5\n"
        path = tmp_path / "m.csv"
        path.write_text(good + "ailboost,g,0,2,2")
        assert len(read_metrics(path)) == 1
        assert truncate_partial_row(path) == len(good)
        assert path.read_text() == good

    def test_wrong_header_rejected(self):
        with pytest.raises(FormatError):
            parse_metrics("a,b\n1,2\n")


class TestConfig:
    def test_round_trip_is_fixed_point(self, tiny_cfg):
        cfg = load_config(tiny_cfg)
        once = format_config(cfg)
        again = parse_config(once)
        assert again == cfg
        assert format_config(again) == once

    def test_typed_algo_block(self, tiny_cfg):
        cfg = load_config(tiny_cfg)
        assert cfg.algo_params["rounds"] == 3 and cfg.seeds == [0, 1]
        assert cfg.algo_config().samples_per_round == 100

    def test_default_benchmark(self):
        cfg = default_config()
        assert build_env(cfg.env).shape == (25, 4) and build_env(cfg.env).discount == 0.99
        assert cfg.seeds == [0, 1, 2] and cfg.expert_trajs == 10

    @pytest.mark.parametrize(
        "edit",
        [
            ("seeds = 0, 1", "seeds ="),
            ("algo = ailboost", "algo = sqil"),
            ("rounds = 3", "rounds = three"),
            ("rounds = 3", "roundz = 3"),
            ("[algo]", "[other]"),
            ("expert_trajs = 1", "expert_trajs = 1\nexpert_data = missing.txt"),
        ],
    )
    def test_invalid(self, tmp_path, edit):
        path = tmp_path / "bad.cfg"
        path.write_text(TINY.replace(*edit))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_relative_expert_data_resolves_next_to_config(self, tmp_path):
        mdp = gridworld(3, 3, 0.9)
        (tmp_path / "demo.txt").write_text(format_dataset(generate_expert(mdp, 1, seed=0)[1], mdp.name, 0.9))
        path = tmp_path / "c.cfg"
        path.write_text(TINY.replace("expert_trajs = 1", "expert_trajs = 1\nexpert_data = demo.txt"))
        assert load_config(path).expert_data == os.path.join(str(tmp_path), "demo.txt")


class TestExperiments:
    def test_bc_single_row(self, tiny_cfg):
        cfg = load_config(tiny_cfg).replace(algo="bc")
        res = run_algorithm(cfg, 0)
        assert len(res.metrics) == 1 and res.metrics[0].env_steps == 0

    @pytest.mark.parametrize("algo", ["dac", "gail"])
    def test_baselines_run(self, tiny_cfg, algo):
        res = run_algorithm(load_config(tiny_cfg).replace(algo=algo), 0)
        assert len(res.metrics) == 3

    def test_oracle_mode_only_for_ailboost(self, tiny_cfg):
        with pytest.raises(ValueError):
            run_algorithm(load_config(tiny_cfg).replace(algo="dac"), 0, oracle_mode=True)

    def test_first_reaching(self):
        ms = [IterationMetrics(k, 10 * k, 0.0, 0.0, 0.0, s, 0.0) for k, s in enumerate([0.1, 0.85, 0.7], 1)]
        assert first_reaching(ms, 0.8) == 20
        assert first_reaching(ms, 0.9) is None

    def test_sweep_parallel_matches_serial(self, tiny_cfg, tmp_path):
        cfg = load_config(tiny_cfg).replace(seeds=[0])
        a, b = tmp_path / "serial", tmp_path / "parallel"
        sweep_schedules(cfg, str(a), presets=["p1000_d1", "p100_d100"])
        sweep_schedules(cfg, str(b), workers=2, presets=["p1000_d1", "p100_d100"])
        for name in ("p1000_d1_seed0.csv", "p100_d100_seed0.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_schedule_presets_named_after_update_ratios():
    assert SCHEDULES == {"p1000_d100": (1000, 100), "p1000_d10": (1000, 10), "p1000_d1": (1000, 1), "p100_d100": (100, 100)}
    assert SCHEDULE_LABELS["p1000_d100"] == "1000 policy updates per 100 discriminator updates"
    assert SCHEDULE_LABELS["p100_d100"] == "100 policy updates per 100 discriminator updates"


class TestCli:
    def test_train_twice_is_byte_identical(self, tiny_cfg, tmp_path):
        outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for out in outs:
            assert main(["train", "--algo", "ailboost", "--config", str(tiny_cfg), "--seed", "1", "--out", str(out)]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()
        assert len(read_metrics(outs[0])) == 3

    def test_different_seed_changes_output(self, tiny_cfg, tmp_path):
        for seed in ("1", "2"):
            main(["train", "--config", str(tiny_cfg), "--seed", seed, "--out", str(tmp_path / f"{seed}.csv")])
        assert (tmp_path / "1.csv").read_bytes() != (tmp_path / "2.csv").read_bytes()

    def test_unknown_algo(self, tiny_cfg, capsys):
        assert main(["train", "--algo", "sqil", "--config", str(tiny_cfg), "--seed", "0"]) != 0
        assert "error" in capsys.readouterr().err

    def test_unknown_flag_and_missing_seed(self, tiny_cfg, capsys):
        assert main(["train", "--config", str(tiny_cfg), "--seed", "0", "--bogus"]) != 0
        assert main(["train", "--config", str(tiny_cfg)]) != 0
        assert capsys.readouterr().err

    def test_unreadable_config(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "nope.cfg"), "--seed", "0"]) != 0
        assert "nope.cfg" in capsys.readouterr().err

    def test_env_list_and_show(self, capsys):
        assert main(["env", "list"]) == 0
        assert capsys.readouterr().out.split() == list(ENV_NAMES)
        assert main(["env", "show", "chain", "--param", "n=4"]) == 0
        assert "states=4 actions=2" in capsys.readouterr().out

    def test_expert_gen_then_train_from_file(self, tiny_cfg, tmp_path):
        demo = tmp_path / "demo.txt"
        assert main(["expert", "gen", "--config", str(tiny_cfg), "--seed", "0", "--out", str(demo)]) == 0
        cfg_path = tmp_path / "file.cfg"
        cfg_path.write_text(TINY.replace("expert_trajs = 1", "expert_trajs = 1\nexpert_data = demo.txt"))
        out = tmp_path / "m.csv"
        assert main(["train", "--config", str(cfg_path), "--seed", "0", "--out", str(out)]) == 0
        assert len(read_metrics(out)) == 3

    def test_train_and_eval_ensemble(self, tiny_cfg, tmp_path, capsys):
        ens = tmp_path / "ens.txt"
        args = ["train", "--config", str(tiny_cfg), "--seed", "0", "--out", str(tmp_path / "m.csv")]
        assert main(args + ["--ensemble-out", str(ens)]) == 0
        capsys.readouterr()
        assert main(["eval", "--config", str(tiny_cfg), "--seed", "0", "--ensemble", str(ens), "--episodes", "50"]) == 0
        assert "normalized_score=" in capsys.readouterr().out

    def test_eval_shape_mismatch(self, tiny_cfg, tmp_path):
        ens = tmp_path / "ens.txt"
        ens.write_text(format_ensemble(init_ensemble(MarkovPolicy.uniform(2, 2))))
        assert main(["eval", "--config", str(tiny_cfg), "--seed", "0", "--ensemble", str(ens)]) != 0

    def test_oracle_flag(self, tiny_cfg, tmp_path):
        out = tmp_path / "o.csv"
        assert main(["train", "--config", str(tiny_cfg), "--seed", "0", "--oracle-mode", "--out", str(out)]) == 0
        assert all(r["fw_gap"] >= -1e-9 for r in read_metrics(out))
        assert main(["train", "--algo", "dac", "--config", str(tiny_cfg), "--seed", "0", "--oracle-mode"]) != 0

    def test_sweep_names_four_runs(self, tiny_cfg, tmp_path, capsys):
        assert main(["sweep", "schedules", "--config", str(tiny_cfg), "--seeds", "0", "--out", str(tmp_path / "sw")]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 1 + 4
        assert sorted(os.listdir(tmp_path / "sw")) == sorted(f"{n}_seed0.csv" for n in SCHEDULES)
        assert any("1000 policy updates per 1 discriminator update" in line for line in out)

    def test_verify_exit_code(self, capsys):
        assert main(["verify", "--check", "replay", "--check", "weights"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2 and all(line.startswith("PASS") for line in lines)
