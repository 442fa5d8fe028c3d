"""Running configured experiments: one (algorithm, seed) cell at a time, or schedule sweeps."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, TextIO

from ..baselines import behavior_cloning, run_dac, run_gail_onpolicy
from ..boosting import SCHEDULES, IterationMetrics, reference_returns, run_ailboost, score_occupancy
from ..divergence import ExpertDataset
from ..ensemble import PolicyEnsemble, init_ensemble
from ..mdp import TabularMdp, exact_occupancy
from .config import ExperimentConfig
from .envs import build_env
from .experts import ExpertStats, expert_stats, generate_expert
from .io import MetricsWriter, load_expert_dataset


@dataclass
class Task:
    mdp: TabularMdp
    expert_data: ExpertDataset
    stats: ExpertStats


@dataclass
class RunResult:
    algo: str
    seed: int
    ensemble: PolicyEnsemble
    metrics: List[IterationMetrics]


def prepare(cfg: ExperimentConfig, seed: int) -> Task:
    """Build the environment and obtain demonstrations (from file, or sampled with ``seed``)."""
    mdp = build_env(cfg.env)
    if cfg.expert_data:
        S, A = mdp.shape
        return Task(mdp, load_expert_dataset(cfg.expert_data, S, A), expert_stats(mdp))
    data, _, stats = generate_expert(mdp, cfg.expert_trajs, seed=seed)
    return Task(mdp, data, stats)


def _bc_metrics(task: Task, policy) -> IterationMetrics:
    mdp = task.mdp
    occ = exact_occupancy(mdp, policy)
    expert_ret, random_ret = reference_returns(mdp, task.stats.occupancy)
    kl, ret, score = score_occupancy(mdp, occ.mass, task.stats.occupancy, expert_ret, random_ret)
    nan = float("nan")
    return IterationMetrics(1, 0, kl, nan, ret, score, nan)


def run_algorithm(
    cfg: ExperimentConfig,
    seed: int,
    stream: Optional[TextIO] = None,
    task: Optional[Task] = None,
    write_header: bool = True,
    **overrides,
) -> RunResult:
    """Run ``cfg.algo`` for one seed, streaming metric rows to ``stream`` as they are produced.

    ``overrides`` replace fields of the ``[algo]`` block (e.g. ``oracle_mode=True``).
    """
    task = task or prepare(cfg, seed)
    mdp = task.mdp
    writer = MetricsWriter(stream, write_header) if stream is not None else None

    def emit(m):
        if writer is not None:
            writer.write(cfg.algo, mdp.name, seed, m)

    if cfg.algo == "bc":
        policy = behavior_cloning(task.expert_data, *mdp.shape, smoothing=float(cfg.algo_params.get("smoothing", 0.0)))
        m = _bc_metrics(task, policy)
        emit(m)
        return RunResult("bc", seed, init_ensemble(policy), [m])

    algo_cfg = cfg.algo_config(seed=seed, **overrides)
    if cfg.algo == "ailboost":
        ens, metrics = run_ailboost(mdp, task.expert_data, task.stats.occupancy, algo_cfg, callback=emit)
        return RunResult("ailboost", seed, ens, metrics)
    if algo_cfg.oracle_mode:
        raise ValueError(f"oracle mode is only defined for ailboost, not {cfg.algo}")
    runner: Callable = run_dac if cfg.algo == "dac" else run_gail_onpolicy
    policy, metrics = runner(mdp, task.expert_data, task.stats.occupancy, algo_cfg, callback=emit)
    return RunResult(cfg.algo, seed, init_ensemble(policy), metrics)


def first_reaching(metrics: List[IterationMetrics], threshold: float) -> Optional[int]:
    """Environment samples at the first round whose normalized score reaches ``threshold``."""
    return next((m.env_steps for m in metrics if m.normalized_score >= threshold), None)


def _schedule_cell(args):
    cfg, name, seed, out_dir = args
    policy_steps, disc_steps = SCHEDULES[name]
    path = os.path.join(out_dir, f"{name}_seed{seed}.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        res = run_algorithm(cfg, seed, fh, policy_steps=policy_steps, disc_steps=disc_steps)
    return name, seed, path, res.metrics


def sweep_schedules(
    cfg: ExperimentConfig, out_dir: str, workers: int = 1, presets=None
) -> Dict[str, Dict[int, List[IterationMetrics]]]:
    """Run every schedule preset for every seed; each cell writes ``<preset>_seed<k>.csv`` in ``out_dir``.

    Cells share nothing, so ``workers > 1`` runs them in separate processes
    without changing any output byte.
    """
    if cfg.algo != "ailboost":
        raise ValueError("schedule sweeps apply to ailboost")
    os.makedirs(out_dir, exist_ok=True)
    names = list(presets or SCHEDULES)
    for name in names:
        if name not in SCHEDULES:
            raise ValueError(f"unknown schedule preset {name!r}")
    cells = [(cfg, name, seed, out_dir) for name in names for seed in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_schedule_cell, cells))
    else:
        done = [_schedule_cell(c) for c in cells]
    out: Dict[str, Dict[int, List[IterationMetrics]]] = {name: {} for name in names}
    for name, seed, _, metrics in done:
        out[name][seed] = metrics
    return out
