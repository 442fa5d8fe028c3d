"""Small tabular environments used by the experiments."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mdp import TabularMdp, check_mdp

# grid actions: up, right, down, left
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
ENV_NAMES = ("chain", "gridworld", "gridworld_slip", "toggle2")


@dataclass
class EnvSpec:
    name: str
    params: dict = field(default_factory=dict)

    def get(self, key, default):
        return self.params.get(key, default)


def chain(n: int = 5, gamma: float = 0.9, start: int = 0) -> TabularMdp:
    """Line of ``n`` states; action 0 steps left, action 1 right. The right end is absorbing and pays 1."""
    if n < 2:
        raise ValueError("chain needs at least 2 states")
    P = np.zeros((n, 2, n))
    for s in range(n):
        if s == n - 1:
            P[s, :, s] = 1.0
            continue
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, s + 1] = 1.0
    r = np.zeros((n, 2))
    r[n - 1, :] = 1.0
    mu = np.zeros(n)
    mu[start] = 1.0
    return TabularMdp(P, gamma, mu, r, name="chain")


def gridworld(
    rows: int = 5,
    cols: int = 5,
    gamma: float = 0.99,
    slip: float = 0.0,
    start=(0, 0),
    goal=None,
    name: str = None,
) -> TabularMdp:
    """Goal-reaching grid. Moves into walls leave the agent in place.

    With ``slip > 0`` the intended move happens with probability
    ``1 - slip`` and each perpendicular move with ``slip / 2``. The goal cell
    is absorbing and pays reward 1 per step for any action.
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError("grid must have at least two cells")
    if not 0.0 <= slip < 1.0:
        raise ValueError("slip must lie in [0, 1)")
    goal = (rows - 1, cols - 1) if goal is None else tuple(goal)
    start = tuple(start)
    for cell in (start, goal):
        if not (0 <= cell[0] < rows and 0 <= cell[1] < cols):
            raise ValueError(f"cell {cell} outside the grid")
    S = rows * cols

    def idx(r, c):
        return r * cols + c

    def move(r, c, a):
        dr, dc = MOVES[a]
        nr, nc = r + dr, c + dc
        if 0 <= nr < rows and 0 <= nc < cols:
            return idx(nr, nc)
        return idx(r, c)

    P = np.zeros((S, 4, S))
    g = idx(*goal)
    for r in range(rows):
        for c in range(cols):
            s = idx(r, c)
            if s == g:
                P[s, :, s] = 1.0
                continue
            for a in range(4):
                P[s, a, move(r, c, a)] += 1.0 - slip
                if slip:
                    for lateral in ((a + 1) % 4, (a + 3) % 4):
                        P[s, a, move(r, c, lateral)] += slip / 2
    reward = np.zeros((S, 4))
    reward[g, :] = 1.0
    mu = np.zeros(S)
    mu[idx(*start)] = 1.0
    label = name or ("gridworld_slip" if slip else "gridworld")
    return TabularMdp(P, gamma, mu, reward, name=label)


def toggle2(gamma: float = 0.5) -> TabularMdp:
    """Two states, actions stay (0) and go (1); reward 1 in state 1; starts in state 0."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    P[0, 1, 1] = P[1, 1, 0] = 1.0
    r = np.array([[0.0, 0.0], [1.0, 1.0]])
    return TabularMdp(P, gamma, np.array([1.0, 0.0]), r, name="toggle2")


def _cell(value):
    if isinstance(value, str):
        value = [int(v) for v in value.replace(",", " ").split()]
    return tuple(int(v) for v in value)


def build_env(spec: EnvSpec) -> TabularMdp:
    name = spec.name
    if name == "chain":
        mdp = chain(int(spec.get("n", 5)), float(spec.get("gamma", 0.9)), int(spec.get("start", 0)))
    elif name in ("gridworld", "gridworld_slip"):
        slip = float(spec.get("slip", 0.2 if name == "gridworld_slip" else 0.0))
        if name == "gridworld" and slip:
            raise ValueError("gridworld is deterministic; use gridworld_slip for slip > 0")
        if name == "gridworld_slip" and slip <= 0:
            raise ValueError("gridworld_slip needs slip > 0")
        goal = spec.params.get("goal")
        mdp = gridworld(
            int(spec.get("rows", 5)),
            int(spec.get("cols", 5)),
            float(spec.get("gamma", 0.99)),
            slip,
            _cell(spec.get("start", (0, 0))),
            None if goal is None else _cell(goal),
            name=name,
        )
    elif name == "toggle2":
        mdp = toggle2(float(spec.get("gamma", 0.5)))
    else:
        raise ValueError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")
    check_mdp(mdp)
    return mdp
