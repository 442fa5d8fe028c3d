"""Plain-text file formats: demonstrations, ensembles and metric CSVs.

Floats are written with ``repr`` so every file round-trips bit-exactly.
"""
from __future__ import annotations

import csv
import io
import os
from typing import Iterable, List, Optional, TextIO, Tuple

import numpy as np

from ..boosting import IterationMetrics
from ..divergence import ExpertDataset
from ..ensemble import PolicyEnsemble
from ..mdp import MarkovPolicy, Step, Trajectory

DATASET_VERSION = "1"
METRICS_HEADER = (
    "algo",
    "env",
    "seed",
    "round",
    "env_steps",
    "reverse_kl",
    "disc_objective",
    "mean_return",
    "normalized_score",
    "fw_gap",
)


class FormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_header(line: str, required: Iterable[str]) -> dict:
    fields = {}
    for tok in line.split():
        if "=" not in tok:
            raise FormatError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    missing = [k for k in required if k not in fields]
    if missing:
        raise FormatError(f"header missing {', '.join(missing)}")
    return fields


# --------------------------------------------------------------------------
# demonstrations


def format_dataset(trajectories: List[Trajectory], env: str, gamma: float) -> str:
    n = sum(len(t) for t in trajectories)
    lines = [f"version={DATASET_VERSION} env={env} gamma={_fmt(gamma)} records={n}"]
    for ep, traj in enumerate(trajectories):
        for k, st in enumerate(traj.steps):
            lines.append(f"{ep} {k} {st.state} {st.action} {_fmt(st.reward)} {st.next_state} {int(st.terminal)}")
    return "\n".join(lines) + "\n"


def write_dataset(path, trajectories: List[Trajectory], env: str, gamma: float) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_dataset(trajectories, env, gamma))


def parse_dataset(text: str) -> Tuple[dict, List[Trajectory]]:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty dataset file")
    header = _parse_header(lines[0], ("version", "env", "gamma", "records"))
    if header["version"] != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {header['version']}")
    header["gamma"] = float(header["gamma"])
    header["records"] = int(header["records"])
    trajs: List[Trajectory] = []
    last_ep = None
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 7:
            raise FormatError(f"line {lineno}: expected 7 fields, got {len(parts)}")
        try:
            ep, k, s, a = (int(p) for p in parts[:4])
            r = float(parts[4])
            s2, done = int(parts[5]), int(parts[6])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if done not in (0, 1):
            raise FormatError(f"line {lineno}: done flag must be 0 or 1")
        if ep != last_ep:
            if last_ep is not None and ep != last_ep + 1:
                raise FormatError(f"line {lineno}: episodes must be numbered consecutively")
            if last_ep is None and ep != 0:
                raise FormatError(f"line {lineno}: first episode must be 0")
            trajs.append(Trajectory())
            last_ep = ep
        if k != len(trajs[-1]):
            raise FormatError(f"line {lineno}: step index {k} out of sequence")
        trajs[-1].steps.append(Step(s, a, r, s2, bool(done)))
    n = sum(len(t) for t in trajs)
    if n != header["records"]:
        raise FormatError(f"header says {header['records']} records, found {n}")
    return header, trajs


def read_dataset(path) -> Tuple[dict, List[Trajectory]]:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read())


def load_expert_dataset(path, num_states: Optional[int] = None, num_actions: Optional[int] = None) -> ExpertDataset:
    _, trajs = read_dataset(path)
    data = ExpertDataset.from_trajectories(trajs, provenance=f"file:{os.fspath(path)}")
    data.check(num_states, num_actions)
    return data


# --------------------------------------------------------------------------
# ensembles


def format_ensemble(ensemble: PolicyEnsemble) -> str:
    S, A = ensemble.policies[0].shape
    lines = [f"components={len(ensemble)} states={S} actions={A}"]
    for w, pi in ensemble.components:
        lines.append(f"alpha={_fmt(w)}")
        for row in pi.probs:
            lines.append(" ".join(_fmt(p) for p in row))
    return "\n".join(lines) + "\n"


def write_ensemble(path, ensemble: PolicyEnsemble) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_ensemble(ensemble))


def parse_ensemble(text: str) -> PolicyEnsemble:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty ensemble file")
    header = _parse_header(lines[0], ("components", "states", "actions"))
    K, S, A = (int(header[k]) for k in ("components", "states", "actions"))
    if len(lines) != 1 + K * (S + 1):
        raise FormatError(f"expected {1 + K * (S + 1)} lines, got {len(lines)}")
    weights, policies = [], []
    pos = 1
    for _ in range(K):
        if not lines[pos].startswith("alpha="):
            raise FormatError(f"line {pos + 1}: expected alpha=<weight>")
        weights.append(float(lines[pos][len("alpha="):]))
        rows = [[float(x) for x in lines[pos + 1 + s].split()] for s in range(S)]
        if any(len(r) != A for r in rows):
            raise FormatError(f"component {len(policies)}: rows must have {A} entries")
        policies.append(MarkovPolicy(np.array(rows)))
        pos += S + 1
    ens = PolicyEnsemble(tuple(weights), tuple(policies))
    ens.check()
    return ens


def read_ensemble(path) -> PolicyEnsemble:
    with open(path, encoding="utf-8") as fh:
        return parse_ensemble(fh.read())


# --------------------------------------------------------------------------
# metrics


def format_metrics_row(algo: str, env: str, seed: int, m: IterationMetrics) -> str:
    fields = [algo, env, str(seed), str(m.round), str(m.env_steps)] + [
        _fmt(v) for v in (m.reverse_kl, m.disc_objective, m.mean_return, m.normalized_score, m.fw_gap)
    ]
    return ",".join(fields) + "\n"


class MetricsWriter:
    """Writes the CSV header, then one complete row per call, flushing after each."""

    def __init__(self, stream: TextIO, write_header: bool = True):
        self.stream = stream
        if write_header:
            stream.write(",".join(METRICS_HEADER) + "\n")
            stream.flush()

    def write(self, algo: str, env: str, seed: int, m: IterationMetrics) -> None:
        self.stream.write(format_metrics_row(algo, env, seed, m))
        self.stream.flush()


def parse_metrics(text: str) -> List[dict]:
    """Parse a metrics CSV, ignoring a trailing partial row left by an interrupted run."""
    if text and not text.endswith("\n"):
        text = text[: text.rfind("\n") + 1]
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(rows[0]) != METRICS_HEADER:
        raise FormatError("metrics header does not match the declared schema")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(METRICS_HEADER):
            raise FormatError(f"row {i}: expected {len(METRICS_HEADER)} columns")
        rec = dict(zip(METRICS_HEADER, row))
        for k in ("seed", "round", "env_steps"):
            rec[k] = int(rec[k])
        for k in METRICS_HEADER[5:]:
            rec[k] = float(rec[k])
        out.append(rec)
    return out


def read_metrics(path) -> List[dict]:
    with open(path, encoding="utf-8") as fh:
        return parse_metrics(fh.read())


def truncate_partial_row(path) -> int:
    """Cut an interrupted metrics file back to its last complete row; returns the new size."""
    with open(path, "rb+") as fh:
        data = fh.read()
        keep = data.rfind(b"\n") + 1
        fh.truncate(keep)
    return keep

