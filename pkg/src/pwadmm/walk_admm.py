"""Per-event updates of parallel random-walk ADMM.

When token ``z_m`` of walk ``m`` arrives at agent ``i``:

1. ``x_i <- argmin f_i(x) + <lam_i, z_m - x> + rho/2 ||z_m - x||^2 + tau_i/2 ||x - x_i||^2``
2. ``lam_i <- lam_i + rho (z_m - x_i)``
3. ``z_m <- z_m + (M/N) (x_i - lam_i/rho)_new - (M/N) (x_i - lam_i/rho)_old``

Step 3 keeps ``mean_l z_l == mean_i (x_i - lam_i/rho)`` from a zero start.
With one walk (M=1) this is plain random-walk ADMM (W-ADMM).

All functions are pure: they take the old state and return new arrays or
new state objects.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from pwadmm.problems import ConsensusProblem, LocalDataset, LossFamily, local_gradient, local_loss


@dataclass(slots=True)
class AgentState:
    """Local primal/dual pair of one agent and its processed-event count ``k``."""

    index: int
    x: np.ndarray
    lam: np.ndarray
    k: int = 0
    tau: float = 0.0


@dataclass(slots=True)
class Token:
    """Consensus iterate carried by one walk; ``step`` counts processed hops."""

    walk_id: int
    z: np.ndarray
    location: int
    step: int = 0


@dataclass(frozen=True)
class AdmmParams:
    rho: float
    tau: float = 0.0
    n_walks: int = 1
    n_agents: int = 1

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.tau < 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if not 1 <= self.n_walks <= self.n_agents:
            raise ValueError(f"need 1 <= n_walks <= n_agents, got M={self.n_walks}, N={self.n_agents}")


def initial_agents(n_agents: int, dim: int, tau: float = 0.0) -> list[AgentState]:
    return [AgentState(i, np.zeros(dim), np.zeros(dim), 0, tau) for i in range(n_agents)]


def initial_tokens(locations, dim: int) -> list[Token]:
    locations = [int(v) for v in locations]
    if len(set(locations)) != len(locations):
        raise ValueError("initial token locations must be distinct agents")
    return [Token(m, np.zeros(dim), loc, 0) for m, loc in enumerate(locations)]


def x_update(agent: AgentState, z: np.ndarray, dataset: LocalDataset, family: LossFamily,
             params: AdmmParams) -> np.ndarray:
    """New primal iterate for ``agent`` given the arriving token ``z``.

    Least squares is minimized exactly through its n x n optimality system;
    logistic uses the linearization of ``f_i`` at the current ``x_i``.
    """
    rho, tau = params.rho, agent.tau
    if family is LossFamily.LEAST_SQUARES:
        A = dataset.ls_hessian + (rho + tau) * np.eye(dataset.dim)
        rhs = dataset.ls_moment + agent.lam + rho * z + tau * agent.x
        return np.linalg.solve(A, rhs)
    g = local_gradient(dataset, family, agent.x)
    return (rho * z + tau * agent.x + agent.lam - g) / (rho + tau)


def lambda_update(agent: AgentState, z: np.ndarray, x_new: np.ndarray, params: AdmmParams) -> np.ndarray:
    return agent.lam + params.rho * (z - x_new)


def token_update(z: np.ndarray, x_old, lam_old, x_new, lam_new, params: AdmmParams) -> np.ndarray:
    scale = params.n_walks / params.n_agents
    rho = params.rho
    # differencing first keeps z bit-identical when the agent did not move
    return z + scale * ((x_new - lam_new / rho) - (x_old - lam_old / rho))


def process_token_event(agent: AgentState, token: Token, problem: ConsensusProblem,
                        params: AdmmParams) -> tuple[AgentState, Token]:
    """Apply the three updates for one token visit; returns fresh state objects."""
    if token.location != agent.index:
        raise ValueError(f"token {token.walk_id} is at agent {token.location}, not {agent.index}")
    ds = problem.datasets[agent.index]
    x_new = x_update(agent, token.z, ds, problem.loss_family, params)
    lam_new = lambda_update(agent, token.z, x_new, params)
    z_new = token_update(token.z, agent.x, agent.lam, x_new, lam_new, params)
    return (
        replace(agent, x=x_new, lam=lam_new, k=agent.k + 1),
        replace(token, z=z_new, step=token.step + 1),
    )


def subproblem_gradient(agent: AgentState, z, x, dataset: LocalDataset, family: LossFamily,
                        params: AdmmParams) -> np.ndarray:
    """Gradient of the (surrogate) x-subproblem at ``x``; zero at the update's output."""
    if family is LossFamily.LEAST_SQUARES:
        g = local_gradient(dataset, family, x)
    else:
        g = local_gradient(dataset, family, agent.x)
    return g - agent.lam - params.rho * (z - x) + agent.tau * (x - agent.x)


def average_token(tokens) -> np.ndarray:
    return np.mean([t.z for t in tokens], axis=0)


def augmented_lagrangian(agents, tokens, problem: ConsensusProblem, params: AdmmParams) -> float:
    """``sum_i f_i(x_i) + <lam_i, zbar - x_i> + rho/2 ||zbar - x_i||^2``, ``zbar`` the token mean."""
    zbar = average_token(tokens)
    X = np.array([a.x for a in agents])
    Lam = np.array([a.lam for a in agents])
    R = zbar - X
    f = sum(local_loss(problem.datasets[a.index], problem.loss_family, a.x) for a in agents)
    return f + float(np.sum(Lam * R)) + 0.5 * params.rho * float(np.sum(R * R))


@dataclass(frozen=True)
class DescentCheck:
    holds: bool
    lhs: float
    rhs_bound: float


def descent_check(before: tuple, after: tuple, agent_index: int, walk_id: int,
                  problem: ConsensusProblem, L: float, params: AdmmParams,
                  atol: float = 1e-9) -> DescentCheck:
    """Per-event Lagrangian descent bound for a single active walk with ``tau = 0``.

    ``before`` and ``after`` are ``(agents, tokens)`` snapshots around the
    event in which walk ``walk_id`` visited ``agent_index``. The bound is

        L(before) - L(after) >= (rho/2 - 3L/2 - L^2/rho) ||dx_i||^2
                                - (N rho / 2) ||zbar - z_m||^2

    with ``zbar`` and ``z_m`` taken before the event.
    """
    agents0, tokens0 = before
    agents1, tokens1 = after
    if params.tau != 0 or any(a.tau != 0 for a in agents0):
        raise ValueError("the descent bound only covers tau = 0")
    rho, N = params.rho, params.n_agents
    lhs = (augmented_lagrangian(agents0, tokens0, problem, params)
           - augmented_lagrangian(agents1, tokens1, problem, params))
    dx = agents0[agent_index].x - agents1[agent_index].x
    gap = average_token(tokens0) - tokens0[walk_id].z
    coef = rho / 2 - 1.5 * L - L * L / rho
    rhs = coef * float(dx @ dx) - 0.5 * N * rho * float(gap @ gap)
    return DescentCheck(lhs >= rhs - atol, lhs, rhs)
