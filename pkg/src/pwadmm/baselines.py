"""Synchronous reference algorithms: consensus ADMM, DGD and EXTRA.

Each ``*_round`` function maps a :class:`SyncState` to the next one and
charges the round's communication to ``comm_units``. Default charges:
consensus ADMM runs as star aggregation (2N unicasts per round); DGD and
EXTRA exchange one vector per edge per direction (2|E| per round, |E|
read off the mixing matrix's off-diagonal support).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from pwadmm.problems import ConsensusProblem, LossFamily
from pwadmm.topology import TransitionMatrix


@dataclass(frozen=True, eq=False)
class SyncState:
    x: np.ndarray
    lam: np.ndarray | None = None
    z_bar: np.ndarray | None = None
    prev_x: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    round: int = 0
    comm_units: int = 0

    @classmethod
    def zeros(cls, n_agents: int, dim: int, admm: bool = False) -> SyncState:
        x = np.zeros((n_agents, dim))
        if admm:
            return cls(x=x, lam=np.zeros_like(x), z_bar=np.zeros(dim))
        return cls(x=x)


def edge_count(W: TransitionMatrix) -> int:
    M = W.matrix
    off = (M != 0) & ~np.eye(M.shape[0], dtype=bool)
    return int(off.sum()) // 2


def sync_admm_round(state: SyncState, problem: ConsensusProblem, rho: float,
                    charge: int | None = None) -> SyncState:
    """One round of synchronous consensus ADMM (z, then x, then lambda).

    The x-step is exact for least squares and uses the gradient
    linearization at the previous iterate for logistic loss.
    """
    N, n = state.x.shape
    lam = state.lam if state.lam is not None else np.zeros_like(state.x)
    z_bar = np.mean(state.x - lam / rho, axis=0)
    if problem.loss_family is LossFamily.LEAST_SQUARES:
        I = np.eye(n)
        x = np.stack([
            np.linalg.solve(d.ls_hessian + rho * I, d.ls_moment + lam[i] + rho * z_bar)
            for i, d in enumerate(problem.datasets)
        ])
    else:
        x = z_bar + (lam - problem.gradients(state.x)) / rho
    lam = lam + rho * (z_bar - x)
    return replace(state, x=x, lam=lam, z_bar=z_bar, round=state.round + 1,
                   comm_units=state.comm_units + (2 * N if charge is None else charge))


def dgd_round(state: SyncState, problem: ConsensusProblem, W: TransitionMatrix, alpha: float,
              charge: int | None = None) -> SyncState:
    """``x_i <- sum_j W_ij x_j - alpha grad f_i(x_i)``."""
    x = W.matrix @ state.x - alpha * problem.gradients(state.x)
    return replace(state, x=x, round=state.round + 1,
                   comm_units=state.comm_units + (2 * edge_count(W) if charge is None else charge))


def extra_round(state: SyncState, problem: ConsensusProblem, W: TransitionMatrix, alpha: float,
                charge: int | None = None) -> SyncState:
    """EXTRA with ``W~ = (I + W)/2``; the first round is a plain DGD step.

    ``x^{k+2} = (I + W) x^{k+1} - W~ x^k - alpha (grad f(x^{k+1}) - grad f(x^k))``
    """
    Wm = W.matrix
    cost = 2 * edge_count(W) if charge is None else charge
    g = problem.gradients(state.x)
    if state.prev_x is None:
        x = Wm @ state.x - alpha * g
    else:
        x = (state.x + Wm @ state.x
             - 0.5 * (state.prev_x + Wm @ state.prev_x)
             - alpha * (g - state.prev_grad))
    return replace(state, x=x, prev_x=state.x, prev_grad=g, round=state.round + 1,
                   comm_units=state.comm_units + cost)
