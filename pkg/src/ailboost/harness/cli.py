"""Command-line entry point (``ailboost``)."""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from ..boosting import SCHEDULE_LABELS, SCHEDULES, normalized_score
from ..ensemble import evaluate_ensemble
from ..mdp import MarkovPolicy
from .config import ALGORITHMS, ConfigError, default_config, load_config
from .envs import ENV_NAMES, EnvSpec, build_env
from .experiments import first_reaching, run_algorithm, sweep_schedules
from .experts import expert_stats, finite_horizon_return, generate_expert
from .io import FormatError, format_dataset, read_ensemble, write_dataset, write_ensemble
from .verify import EXACT_CHECKS, SAMPLED_CHECKS, run_checks


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _env_params(pairs: List[str]) -> dict:
    params = {}
    for item in pairs or []:
        if "=" not in item:
            raise CliError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    return params


def _load(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else default_config()
    changes = {}
    if getattr(args, "algo", None):
        changes["algo"] = args.algo
    if getattr(args, "expert_trajs", None) is not None:
        changes["expert_trajs"] = args.expert_trajs
    if getattr(args, "env", None):
        changes["env"] = EnvSpec(args.env, _env_params(args.param))
    if changes:
        cfg = cfg.replace(**changes)
        cfg.validate()
    return cfg


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def cmd_env(args) -> int:
    if args.action == "list":
        for name in ENV_NAMES:
            print(name)
        return 0
    if not args.name:
        raise CliError("env show needs an environment name")
    mdp = build_env(EnvSpec(args.name, _env_params(args.param)))
    stats = expert_stats(mdp)
    print(f"name={mdp.name} states={mdp.num_states} actions={mdp.num_actions} gamma={mdp.discount!r}")
    print(f"expert_return={stats.expert_return!r} random_return={stats.random_return!r}")
    return 0


def cmd_expert(args) -> int:
    cfg = _load(args)
    mdp = build_env(cfg.env)
    data, trajs, stats = generate_expert(mdp, cfg.expert_trajs, seed=args.seed)
    if args.out in (None, "-"):
        sys.stdout.write(format_dataset(trajs, mdp.name, mdp.discount))
    else:
        write_dataset(args.out, trajs, mdp.name, mdp.discount)
    print(f"{len(trajs)} trajectories, {len(data)} records; expert return {stats.expert_return:.6g}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    overrides = {"oracle_mode": True} if args.oracle_mode else {}
    if args.oracle_mode and cfg.algo != "ailboost":
        raise CliError("--oracle-mode applies to ailboost only")
    out, close = _open_out(args.out or cfg.output)
    try:
        res = run_algorithm(cfg, args.seed, out, **overrides)
    finally:
        if close:
            out.close()
    if args.ensemble_out:
        write_ensemble(args.ensemble_out, res.ensemble)
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    mdp = build_env(cfg.env)
    ens = read_ensemble(args.ensemble)
    if ens.policies[0].shape != mdp.shape:
        raise CliError(f"ensemble shape {ens.policies[0].shape} does not match environment {mdp.shape}")
    episodes = args.episodes or cfg.eval_episodes
    horizon = args.horizon or cfg.eval_horizon
    res = evaluate_ensemble(mdp, ens, n_episodes=episodes, termination="horizon", horizon=horizon, seed=args.seed)
    # references truncated at the same horizon, so the score compares like with like
    stats = expert_stats(mdp)
    expert_ret = finite_horizon_return(mdp, stats.policy, mdp.env_reward, horizon)
    random_ret = finite_horizon_return(mdp, MarkovPolicy.uniform(*mdp.shape), mdp.env_reward, horizon)
    score = normalized_score(res.mean_return, expert_ret, random_ret)
    print(f"episodes={episodes} horizon={horizon}")
    print(f"mean_return={res.mean_return!r} std_error={res.std_error!r}")
    print(f"expert_return={expert_ret!r} random_return={random_ret!r}")
    print(f"normalized_score={score!r}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if args.seeds:
        cfg = cfg.replace(seeds=[int(s) for s in args.seeds.replace(",", " ").split()])
    cfg = cfg.replace(algo="ailboost")
    presets = args.preset or list(SCHEDULES)
    results = sweep_schedules(cfg, args.out, workers=args.workers, presets=presets)
    print("preset,label,seed,final_score,first_env_steps_at_0.8")
    for name in presets:
        for seed in cfg.seeds:
            m = results[name][seed]
            hit = first_reaching(m, 0.8)
            print(f"{name},{SCHEDULE_LABELS[name]},{seed},{m[-1].normalized_score!r},{'' if hit is None else hit}")
    return 0


def cmd_verify(args) -> int:
    results = run_checks(args.check, include_sampled=args.all)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ailboost", description="Boosted adversarial imitation on tabular MDPs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(sp, seed_required=True):
        sp.add_argument("--config", help="experiment config file")
        sp.add_argument("--env", choices=ENV_NAMES, help="environment name (overrides the config)")
        sp.add_argument("--param", action="append", metavar="KEY=VALUE", help="environment parameter")
        sp.add_argument("--expert-trajs", type=int, help="number of expert trajectories")
        if seed_required:
            sp.add_argument("--seed", type=int, required=True)

    env = sub.add_parser("env", help="list or describe environments")
    env.add_argument("action", choices=("list", "show"))
    env.add_argument("name", nargs="?", choices=ENV_NAMES)
    env.add_argument("--param", action="append", metavar="KEY=VALUE")
    env.set_defaults(func=cmd_env)

    exp = sub.add_parser("expert", help="generate expert demonstrations")
    exp.add_argument("action", choices=("gen",))
    add_common(exp)
    exp.add_argument("--out", help="dataset file (default: stdout)")
    exp.set_defaults(func=cmd_expert)

    tr = sub.add_parser("train", help="run one algorithm for one seed and write metrics CSV")
    add_common(tr)
    tr.add_argument("--algo", choices=ALGORITHMS)
    tr.add_argument("--out", help="metrics CSV (default: config 'out' or stdout)")
    tr.add_argument("--oracle-mode", action="store_true", help="exact discriminator and exact weak learner")
    tr.add_argument("--ensemble-out", help="write the learned ensemble to this file")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="Monte-Carlo evaluation of a saved ensemble")
    add_common(ev)
    ev.add_argument("--ensemble", required=True)
    ev.add_argument("--episodes", type=int)
    ev.add_argument("--horizon", type=int)
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", help="optimization-schedule sweep")
    sw.add_argument("action", choices=("schedules",))
    add_common(sw, seed_required=False)
    sw.add_argument("--seeds", help="comma-separated seeds (default: config seeds)")
    sw.add_argument("--preset", action="append", choices=list(SCHEDULES))
    sw.add_argument("--out", required=True, help="output directory, one CSV per (preset, seed)")
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)

    ve = sub.add_parser("verify", help="run the exact-oracle self-checks")
    ve.add_argument("--check", action="append", choices=list(EXACT_CHECKS) + list(SAMPLED_CHECKS))
    ve.add_argument("--all", action="store_true", help="also run the sampled experiments (slow)")
    ve.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, ConfigError, FormatError, ValueError, OSError, FloatingPointError) as exc:
        print(f"ailboost: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, CliError) else 1


if __name__ == "__main__":
    sys.exit(main())
