"""Tabular MDPs: occupancy measures, rollouts and planning.

Everything in the package runs on :class:`TabularMdp`. Occupancies are
computed exactly by a linear solve over states, which is what makes the
boosting loop checkable against closed-form answers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import softmax

from ._rng import as_generator

ROW_TOL = 1e-12
FLOW_TOL = 1e-8
DIRECT_SOLVE_LIMIT = 10_000


class InvalidMdpError(ValueError):
    """Raised when an operation receives an MDP or policy breaking its invariants."""


class OccupancySolverError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"occupancy solver did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite discounted MDP.

    ``transition`` has shape ``(S, A, S)``. ``env_reward`` is only used to
    build experts and score learners; imitation learners never see it.
    """

    transition: np.ndarray
    discount: float
    init_dist: np.ndarray
    env_reward: Optional[np.ndarray] = None
    name: str = "mdp"

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "init_dist", _frozen(self.init_dist))
        object.__setattr__(self, "discount", float(self.discount))
        if self.env_reward is not None:
            object.__setattr__(self, "env_reward", _frozen(self.env_reward))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def shape(self):
        return (self.num_states, self.num_actions)


@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    """Stationary stochastic policy, ``probs[s, a] = pi(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "MarkovPolicy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "MarkovPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((len(actions), num_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)

    @property
    def shape(self):
        return self.probs.shape


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """Discounted state-action visitation distribution ``mass[s, a]``."""

    mass: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mass", _frozen(self.mass))

    @property
    def state_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def conditional_policy(self) -> MarkovPolicy:
        """Markov policy ``d(s, a) / d(s)`` inducing this occupancy; uniform where ``d(s) = 0``."""
        marg = self.state_marginal
        A = self.mass.shape[1]
        probs = np.full(self.mass.shape, 1.0 / A)
        seen = marg > 0
        probs[seen] = self.mass[seen] / marg[seen, None]
        return MarkovPolicy(probs)


class Step(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool


@dataclass
class Trajectory:
    steps: List[Step] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    @property
    def states(self) -> np.ndarray:
        return np.array([st.state for st in self.steps], dtype=int)

    @property
    def actions(self) -> np.ndarray:
        return np.array([st.action for st in self.steps], dtype=int)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([st.reward for st in self.steps], dtype=float)

    def discounted_return(self, discount: float) -> float:
        r = self.rewards
        return float(np.sum(r * discount ** np.arange(len(r))))


@dataclass(frozen=True, eq=False)
class ValueSolution:
    q_values: np.ndarray
    v_values: np.ndarray
    greedy_policy: MarkovPolicy
    residuals: tuple = ()


# --------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    violations: List[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "; ".join(self.violations)


def validate_mdp(mdp: TabularMdp) -> ValidationReport:
    """Collect every invariant violation of ``mdp``. Never raises."""
    out = []
    P = np.asarray(mdp.transition)
    if P.ndim != 3 or P.shape[0] != P.shape[2] or 0 in P.shape:
        out.append(f"transition must have shape (S, A, S), got {P.shape}")
        return ValidationReport(out)
    S, A, _ = P.shape
    if not np.all(np.isfinite(P)):
        out.append("transition has non-finite entries")
    for s, a in zip(*np.nonzero((P < 0).any(axis=2))):
        out.append(f"negative probability at (s={s},a={a})")
    sums = P.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_TOL)):
        out.append(f"row sum {sums[s, a]:.12g} != 1 at (s={s},a={a})")
    mu = np.asarray(mdp.init_dist)
    if mu.shape != (S,):
        out.append(f"init_dist must have shape ({S},), got {mu.shape}")
    else:
        if (mu < 0).any():
            out.append("init_dist has negative entries")
        if abs(mu.sum() - 1.0) > ROW_TOL:
            out.append(f"init_dist sums to {mu.sum():.12g} != 1")
    if not 0.0 < mdp.discount < 1.0:
        out.append(f"discount {mdp.discount} not in open interval (0, 1)")
    if mdp.env_reward is not None:
        r = np.asarray(mdp.env_reward)
        if r.shape != (S, A):
            out.append(f"env_reward must have shape ({S}, {A}), got {r.shape}")
        elif not np.all(np.isfinite(r)):
            out.append("env_reward has non-finite entries")
    return ValidationReport(out)


def validate_policy(policy: MarkovPolicy, mdp: Optional[TabularMdp] = None) -> ValidationReport:
    out = []
    p = policy.probs
    if p.ndim != 2:
        return ValidationReport([f"policy table must be 2-d, got shape {p.shape}"])
    if mdp is not None and p.shape != mdp.shape:
        out.append(f"policy shape {p.shape} does not match MDP {mdp.shape}")
    if (p < 0).any() or not np.all(np.isfinite(p)):
        out.append("policy has negative or non-finite entries")
    sums = p.sum(axis=1)
    for s in np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL):
        out.append(f"policy row sum {sums[s]:.12g} != 1 at s={s}")
    return ValidationReport(out)


def check_mdp(mdp: TabularMdp) -> None:
    report = validate_mdp(mdp)
    if not report.ok:
        raise InvalidMdpError(str(report))


def check_policy(policy: MarkovPolicy, mdp: Optional[TabularMdp] = None) -> None:
    report = validate_policy(policy, mdp)
    if not report.ok:
        raise InvalidMdpError(str(report))


def check_reward(mdp: TabularMdp, reward) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    if reward.shape != mdp.shape:
        raise ValueError(f"reward shape {reward.shape} does not match MDP {mdp.shape}")
    return reward


# --------------------------------------------------------------------------
# occupancy


def _state_transition(mdp: TabularMdp, policy: MarkovPolicy) -> np.ndarray:
    # P_pi[s, s'] = sum_a pi(a|s) P(s'|s,a)
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def flow_residual(mdp: TabularMdp, policy: MarkovPolicy, mass: np.ndarray) -> float:
    """Max violation of d = (1-g) mu0 pi + g pi * (P^T d)."""
    gamma = mdp.discount
    inflow = np.einsum("sat,sa->t", mdp.transition, mass)
    rho = (1 - gamma) * mdp.init_dist + gamma * inflow
    return float(np.max(np.abs(mass - policy.probs * rho[:, None])))


def exact_occupancy(
    mdp: TabularMdp,
    policy: MarkovPolicy,
    max_iter: int = 100_000,
    tol: float = 1e-10,
) -> OccupancyMeasure:
    """Discounted occupancy ``d^pi`` of ``policy`` in ``mdp``.

    Solves the state flow equation directly when ``S * A`` is at most
    ``DIRECT_SOLVE_LIMIT``; otherwise falls back to fixed-point iteration.
    """
    check_mdp(mdp)
    check_policy(policy, mdp)
    gamma = mdp.discount
    S, A = mdp.shape
    P_pi = _state_transition(mdp, policy)
    if S * A <= DIRECT_SOLVE_LIMIT:
        rho = np.linalg.solve(np.eye(S) - gamma * P_pi.T, (1 - gamma) * mdp.init_dist)
    else:
        rho = mdp.init_dist.copy()
        for it in range(max_iter):
            new = (1 - gamma) * mdp.init_dist + gamma * P_pi.T @ rho
            delta = float(np.max(np.abs(new - rho)))
            rho = new
            if delta <= tol * (1 - gamma):
                break
        else:
            raise OccupancySolverError(delta, max_iter)
    rho = np.clip(rho, 0.0, None)
    mass = policy.probs * rho[:, None]
    mass = mass / mass.sum()
    residual = flow_residual(mdp, policy, mass)
    if residual > FLOW_TOL:
        raise OccupancySolverError(residual, 0)
    return OccupancyMeasure(mass)


# --------------------------------------------------------------------------
# sampling


class _Sampler:
    """Inverse-CDF lookups for one (mdp, policy) pair."""

    def __init__(self, mdp: TabularMdp, policy: MarkovPolicy):
        self.pi_cdf = np.cumsum(policy.probs, axis=1)
        self.p_cdf = np.cumsum(mdp.transition, axis=2)
        self.mu_cdf = np.cumsum(mdp.init_dist)
        self.reward = mdp.env_reward
        self.A = mdp.num_actions
        self.S = mdp.num_states

    @staticmethod
    def _draw(cdf: np.ndarray, u: float, n: int) -> int:
        # last index guards against cumulative sums that round below 1
        return min(int(np.searchsorted(cdf, u, side="right")), n - 1)

    def initial(self, rng) -> int:
        return self._draw(self.mu_cdf, rng.random(), self.S)

    def step(self, s: int, rng):
        u_a, u_s = rng.random(2)
        a = self._draw(self.pi_cdf[s], u_a, self.A)
        s2 = self._draw(self.p_cdf[s, a], u_s, self.S)
        r = 0.0 if self.reward is None else float(self.reward[s, a])
        return a, r, s2


def rollout(
    mdp: TabularMdp,
    policy: MarkovPolicy,
    termination: str = "geometric",
    horizon: int = 500,
    seed=None,
) -> Trajectory:
    """Sample one episode.

    ``termination="geometric"`` stops after each step with probability
    ``1 - discount``, so the visited pairs are unbiased draws from the
    discounted occupancy. ``termination="horizon"`` runs exactly
    ``horizon`` steps.
    """
    check_mdp(mdp)
    check_policy(policy, mdp)
    rng = as_generator(seed)
    return _rollout(_Sampler(mdp, policy), mdp.discount, termination, horizon, rng)


def _rollout(sampler: _Sampler, gamma, termination, horizon, rng, max_steps=None) -> Trajectory:
    if termination not in ("geometric", "horizon"):
        raise ValueError(f"unknown termination mode {termination!r}")
    traj = Trajectory()
    s = sampler.initial(rng)
    while True:
        a, r, s2 = sampler.step(s, rng)
        traj.steps.append(Step(s, a, r, s2, False))
        s = s2
        if termination == "horizon":
            if len(traj) >= horizon:
                break
        elif rng.random() >= gamma:
            break
        if max_steps is not None and len(traj) >= max_steps:
            break
    return traj


def rollouts(
    mdp: TabularMdp,
    policy: MarkovPolicy,
    n_episodes: int,
    termination: str = "geometric",
    horizon: int = 500,
    seed=None,
) -> List[Trajectory]:
    check_mdp(mdp)
    check_policy(policy, mdp)
    rng = as_generator(seed)
    sampler = _Sampler(mdp, policy)
    return [_rollout(sampler, mdp.discount, termination, horizon, rng) for _ in range(n_episodes)]


def collect_steps(
    mdp: TabularMdp,
    policy: MarkovPolicy,
    n_steps: int,
    termination: str = "geometric",
    horizon: int = 500,
    seed=None,
) -> List[Trajectory]:
    """Roll out whole episodes until ``n_steps`` steps are gathered; the last episode is cut short."""
    check_policy(policy, mdp)
    rng = as_generator(seed)
    sampler = _Sampler(mdp, policy)
    out, total = [], 0
    while total < n_steps:
        traj = _rollout(sampler, mdp.discount, termination, horizon, rng, max_steps=n_steps - total)
        out.append(traj)
        total += len(traj)
    return out


# --------------------------------------------------------------------------
# planning


def _greedy(q: np.ndarray) -> MarkovPolicy:
    # np.argmax returns the first maximiser: ties go to the lowest action index
    return MarkovPolicy.deterministic(np.argmax(q, axis=1), q.shape[1])


def value_iteration(mdp: TabularMdp, reward, tol: float = 1e-10, max_iter: int = 100_000) -> ValueSolution:
    """Optimal values by repeated Bellman optimality backups.

    Stops when the sup-norm change drops below ``tol * (1 - discount) / discount``,
    which bounds the Bellman residual of the returned ``V`` by ``tol``.
    """
    check_mdp(mdp)
    reward = check_reward(mdp, reward)
    gamma = mdp.discount
    P = mdp.transition
    v = np.zeros(mdp.num_states)
    residuals = []
    for _ in range(max_iter):
        q = reward + gamma * P @ v
        new_v = q.max(axis=1)
        res = float(np.max(np.abs(new_v - v)))
        residuals.append(res)
        v = new_v
        if res * gamma <= tol * (1 - gamma) or res == 0.0:
            break
    q = reward + gamma * P @ v
    v = q.max(axis=1)
    return ValueSolution(q, v, _greedy(q), tuple(residuals))


def bellman_residual(mdp: TabularMdp, reward, v: np.ndarray) -> float:
    q = np.asarray(reward) + mdp.discount * mdp.transition @ v
    return float(np.max(np.abs(q.max(axis=1) - v)))


def softmax_policy(q: np.ndarray, temperature: float) -> MarkovPolicy:
    return MarkovPolicy(softmax(q / temperature, axis=1))


def soft_value(q: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise ``temperature * log sum exp(q / temperature)``, max-shifted.

    Hand-rolled because it sits in the value-iteration inner loop, where
    ``scipy.special.logsumexp``'s per-call overhead dominates on small tables.
    """
    m = q.max(axis=-1)
    z = np.exp((q - m[..., None]) / temperature)
    return m + temperature * np.log(z.sum(axis=-1))


def soft_value_iteration(
    mdp: TabularMdp,
    reward,
    temperature: float,
    iters: int = 1000,
    tol: Optional[float] = None,
    v_init: Optional[np.ndarray] = None,
) -> ValueSolution:
    """Entropy-regularised value iteration.

    Runs ``iters`` soft Bellman backups (fewer if ``tol`` is given and the
    sup-norm change falls below it) and returns ``softmax(Q / temperature)``
    as the policy.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    check_mdp(mdp)
    reward = check_reward(mdp, reward)
    gamma = mdp.discount
    P = mdp.transition
    v = np.zeros(mdp.num_states) if v_init is None else np.asarray(v_init, dtype=float).copy()
    residuals = []
    for _ in range(iters):
        q = reward + gamma * P @ v
        new_v = soft_value(q, temperature)
        res = float(np.max(np.abs(new_v - v)))
        residuals.append(res)
        v = new_v
        if tol is not None and res <= tol:
            break
    q = reward + gamma * P @ v
    return ValueSolution(q, soft_value(q, temperature), softmax_policy(q, temperature), tuple(residuals))


def policy_evaluation(mdp: TabularMdp, policy: MarkovPolicy, reward) -> np.ndarray:
    """``V^pi`` from the linear system ``(I - g P_pi) V = r_pi``."""
    check_mdp(mdp)
    check_policy(policy, mdp)
    reward = check_reward(mdp, reward)
    P_pi = _state_transition(mdp, policy)
    r_pi = (policy.probs * reward).sum(axis=1)
    return np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * P_pi, r_pi)


def occupancy_return(mdp: TabularMdp, occupancy: OccupancyMeasure, reward) -> float:
    reward = check_reward(mdp, reward)
    mass = occupancy.mass if isinstance(occupancy, OccupancyMeasure) else np.asarray(occupancy)
    return float(np.sum(mass * reward) / (1 - mdp.discount))


def policy_return(mdp: TabularMdp, policy: MarkovPolicy, reward) -> float:
    """Expected discounted return from ``init_dist``, ``<d^pi, r> / (1 - discount)``."""
    return occupancy_return(mdp, exact_occupancy(mdp, policy), reward)

