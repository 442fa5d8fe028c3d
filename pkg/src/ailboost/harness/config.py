"""Experiment configuration files.

The format is ``key = value`` lines under ``[section]`` headers with ``#``
comments, read by :mod:`configparser`. Three sections are understood:

``[experiment]``
    ``algo`` (ailboost, dac, bc, gail), ``expert_trajs``, ``seeds``
    (comma-separated), optional ``expert_data`` (demonstration file; sampled
    from the value-iteration expert when absent), optional ``out``,
    ``eval_episodes`` and ``eval_horizon``.
``[env]``
    ``name`` plus environment parameters (``rows``, ``cols``, ``slip``,
    ``gamma``, ``n``, ``start``, ``goal``).
``[algo]``
    Any :class:`~ailboost.baselines.DacConfig` field, plus ``smoothing``
    for behaviour cloning.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import os
import typing
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..baselines import DacConfig
from .envs import EnvSpec

ALGORITHMS = ("ailboost", "dac", "bc", "gail")
EXPERT_TRAJ_CHOICES = (1, 5, 10)


class ConfigError(ValueError):
    pass


_ALGO_TYPES = typing.get_type_hints(DacConfig)
_ALGO_TYPES["smoothing"] = float


def _convert(key: str, raw: str):
    tp = _ALGO_TYPES.get(key)
    if tp is None:
        raise ConfigError(f"unknown [algo] key {key!r}")
    if typing.get_origin(tp) is typing.Union:
        if raw.strip().lower() in ("", "none"):
            return None
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    if tp is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[algo] {key}: expected a boolean, got {raw!r}")
    try:
        return tp(raw.strip())
    except ValueError:
        raise ConfigError(f"[algo] {key}: cannot parse {raw!r} as {tp.__name__}") from None


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    return str(value)


@dataclass
class ExperimentConfig:
    env: EnvSpec
    algo: str = "ailboost"
    algo_params: Dict[str, object] = field(default_factory=dict)
    expert_trajs: int = 10
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    expert_data: Optional[str] = None
    output: Optional[str] = None
    eval_episodes: int = 1000
    eval_horizon: int = 200

    def validate(self, check_files: bool = True) -> None:
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; choose from {', '.join(ALGORITHMS)}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.expert_trajs < 1:
            raise ConfigError("expert_trajs must be positive")
        if check_files and self.expert_data and not os.path.exists(self.expert_data):
            raise ConfigError(f"expert data file {self.expert_data!r} does not exist")
        self.algo_config()

    def algo_config(self, **overrides) -> DacConfig:
        params = {k: v for k, v in self.algo_params.items() if k != "smoothing"}
        params.update(overrides)
        try:
            return DacConfig(**params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [algo] block: {exc}") from None

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def parse_config(text: str, base_dir: Optional[str] = None, check_files: bool = True) -> ExperimentConfig:
    cp = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None, default_section="__defaults__"
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(cp.sections()) - {"experiment", "env", "algo"}
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    if not cp.has_section("env") or "name" not in cp["env"]:
        raise ConfigError("[env] section with a name is required")
    env_params = {k: v for k, v in cp["env"].items() if k != "name"}
    env = EnvSpec(cp["env"]["name"], env_params)

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    known = {"algo", "expert_trajs", "seeds", "expert_data", "out", "eval_episodes", "eval_horizon"}
    extra = set(exp) - known
    if extra:
        raise ConfigError(f"unknown [experiment] keys: {', '.join(sorted(extra))}")
    try:
        seeds = [int(s) for s in exp.get("seeds", "0, 1, 2").replace(",", " ").split()]
        expert_trajs = int(exp.get("expert_trajs", "10"))
        eval_episodes = int(exp.get("eval_episodes", "1000"))
        eval_horizon = int(exp.get("eval_horizon", "200"))
    except ValueError as exc:
        raise ConfigError(f"[experiment]: {exc}") from None
    expert_data = exp.get("expert_data") or None
    if expert_data and base_dir and not os.path.isabs(expert_data):
        expert_data = os.path.join(base_dir, expert_data)

    algo_params = {}
    if cp.has_section("algo"):
        for k, v in cp["algo"].items():
            algo_params[k] = _convert(k, v)
    cfg = ExperimentConfig(
        env=env,
        algo=exp.get("algo", "ailboost"),
        algo_params=algo_params,
        expert_trajs=expert_trajs,
        seeds=seeds,
        expert_data=expert_data,
        output=exp.get("out") or None,
        eval_episodes=eval_episodes,
        eval_horizon=eval_horizon,
    )
    cfg.validate(check_files)
    return cfg


def format_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    cp.optionxform = str
    exp = {
        "algo": cfg.algo,
        "expert_trajs": str(cfg.expert_trajs),
        "seeds": _render(cfg.seeds),
        "eval_episodes": str(cfg.eval_episodes),
        "eval_horizon": str(cfg.eval_horizon),
    }
    if cfg.expert_data:
        exp["expert_data"] = cfg.expert_data
    if cfg.output:
        exp["out"] = cfg.output
    cp["experiment"] = exp
    cp["env"] = {"name": cfg.env.name, **{k: _render(v) for k, v in sorted(cfg.env.params.items())}}
    cp["algo"] = {k: _render(v) for k, v in sorted(cfg.algo_params.items())}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path, check_files: bool = True) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)), check_files=check_files)


def default_config(**changes) -> ExperimentConfig:
    """Desk-scale benchmark: 5x5 goal-reaching grid, discount 0.99, three seeds."""
    cfg = ExperimentConfig(
        env=EnvSpec("gridworld", {"rows": "5", "cols": "5", "gamma": "0.99"}),
        algo="ailboost",
        algo_params={"rounds": 200},
        expert_trajs=10,
        seeds=[0, 1, 2],
    )
    return cfg.replace(**changes)
