"""Benchmark consensus problems: least squares and logistic regression.

Each agent ``i`` holds a private dataset ``{(o_ij, t_ij)}`` and the loss

* least squares: ``f_i(x) = (1/b_i) sum_j (x^T o_ij - t_ij)^2``
* logistic:      ``f_i(x) = (1/b_i) sum_j log(1 + exp(-t_ij x^T o_ij))``

The network objective is ``sum_i f_i(x)``; :func:`solve_oracle` computes its
minimizer, against which accuracy is measured.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from pwadmm.rng import as_generator


class LossFamily(str, enum.Enum):
    LEAST_SQUARES = "least_squares"
    LOGISTIC = "logistic"


@dataclass(frozen=True, eq=False)
class LocalDataset:
    """Samples held by one agent: ``features`` is ``(b_i, n)``, ``targets`` is ``(b_i,)``."""

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        O = np.asarray(self.features, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        if O.ndim != 2 or t.ndim != 1 or O.shape[0] != t.shape[0]:
            raise ValueError(f"features {O.shape} and targets {t.shape} do not align")
        if O.shape[0] < 1:
            raise ValueError("a local dataset needs at least one sample")
        object.__setattr__(self, "features", O)
        object.__setattr__(self, "targets", t)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        """``O^T O`` over the local samples (n x n)."""
        return self.features.T @ self.features

    @cached_property
    def ls_hessian(self) -> np.ndarray:
        """Hessian of the least-squares loss, ``(2/b) O^T O``."""
        return (2.0 / self.n_samples) * self.gram

    @cached_property
    def ls_moment(self) -> np.ndarray:
        """Linear term of the least-squares normal equations, ``(2/b) O^T t``."""
        return (2.0 / self.n_samples) * (self.features.T @ self.targets)


def local_loss(ds: LocalDataset, family: LossFamily, x: np.ndarray) -> float:
    margin = ds.features @ x
    if family is LossFamily.LEAST_SQUARES:
        r = margin - ds.targets
        return float(r @ r) / ds.n_samples
    return float(np.mean(np.logaddexp(0.0, -ds.targets * margin)))


def local_gradient(ds: LocalDataset, family: LossFamily, x: np.ndarray) -> np.ndarray:
    margin = ds.features @ x
    if family is LossFamily.LEAST_SQUARES:
        return (2.0 / ds.n_samples) * (ds.features.T @ (margin - ds.targets))
    # d/dm log(1+exp(-t m)) = -t * sigmoid(-t m)
    w = -ds.targets * expit(-ds.targets * margin)
    return (ds.features.T @ w) / ds.n_samples


@dataclass(frozen=True, eq=False)
class ConsensusProblem:
    """Per-agent datasets sharing one loss family and dimension."""

    loss_family: LossFamily
    datasets: tuple[LocalDataset, ...]

    def __post_init__(self):
        object.__setattr__(self, "loss_family", LossFamily(self.loss_family))
        object.__setattr__(self, "datasets", tuple(self.datasets))
        if not self.datasets:
            raise ValueError("a problem needs at least one agent")
        dims = {d.dim for d in self.datasets}
        if len(dims) != 1:
            raise ValueError(f"agents disagree on dimension: {sorted(dims)}")
        if self.loss_family is LossFamily.LOGISTIC:
            for i, d in enumerate(self.datasets):
                if not np.all(np.isin(d.targets, (-1.0, 1.0))):
                    raise ValueError(f"agent {i}: logistic targets must be -1 or +1")

    @property
    def n_agents(self) -> int:
        return len(self.datasets)

    @property
    def dim(self) -> int:
        return self.datasets[0].dim

    def loss(self, i: int, x) -> float:
        return local_loss(self.datasets[i], self.loss_family, np.asarray(x, dtype=float))

    def gradient(self, i: int, x) -> np.ndarray:
        return local_gradient(self.datasets[i], self.loss_family, np.asarray(x, dtype=float))

    def total_loss(self, x) -> float:
        return sum(self.loss(i, x) for i in range(self.n_agents))

    def total_gradient(self, x) -> np.ndarray:
        return sum(self.gradient(i, x) for i in range(self.n_agents))

    @cached_property
    def _stacked(self):
        sizes = {d.n_samples for d in self.datasets}
        if len(sizes) != 1:
            return None
        O = np.stack([d.features for d in self.datasets])
        t = np.stack([d.targets for d in self.datasets])
        return O, t

    def gradients(self, X: np.ndarray) -> np.ndarray:
        """Local gradients at per-agent points ``X`` (N x n), row ``i`` = grad f_i(X[i])."""
        stacked = self._stacked
        if stacked is None:
            return np.stack([self.gradient(i, X[i]) for i in range(self.n_agents)])
        O, t = stacked
        margin = np.einsum("ibn,in->ib", O, X)
        b = O.shape[1]
        if self.loss_family is LossFamily.LEAST_SQUARES:
            return (2.0 / b) * np.einsum("ibn,ib->in", O, margin - t)
        w = -t * expit(-t * margin)
        return np.einsum("ibn,ib->in", O, w) / b

    def losses(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.loss(i, X[i]) for i in range(self.n_agents)])

    @cached_property
    def oracle_solution(self) -> np.ndarray:
        return solve_oracle(self)

    def to_csv(self, path) -> None:
        """One row per sample: ``agent_id,target,feature_1..feature_n`` (17 significant digits)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["agent_id", "target", *(f"feature_{k + 1}" for k in range(self.dim))])
            for i, d in enumerate(self.datasets):
                for o, t in zip(d.features, d.targets):
                    w.writerow([i, f"{t:.17g}", *(f"{v:.17g}" for v in o)])

    @classmethod
    def from_csv(cls, path, loss_family) -> ConsensusProblem:
        per_agent: dict[int, list[list[float]]] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                per_agent.setdefault(int(row[0]), []).append([float(v) for v in row[1:]])
        if sorted(per_agent) != list(range(len(per_agent))):
            raise ValueError("agent ids must be contiguous from 0")
        datasets = []
        for i in range(len(per_agent)):
            rows = np.array(per_agent[i])
            datasets.append(LocalDataset(rows[:, 1:], rows[:, 0]))
        return cls(LossFamily(loss_family), tuple(datasets))


def synthesize_least_squares(n_agents: int, samples_per_agent: int = 30, dim: int = 2,
                             seed: int | np.random.Generator = 0) -> ConsensusProblem:
    """Features and targets i.i.d. U(0, 1); no planted model."""
    if samples_per_agent < 1 or dim < 1:
        raise ValueError("samples_per_agent and dim must be positive")
    rng = as_generator(seed, "data")
    datasets = []
    for _ in range(n_agents):
        O = rng.uniform(0.0, 1.0, size=(samples_per_agent, dim))
        t = rng.uniform(0.0, 1.0, size=samples_per_agent)
        datasets.append(LocalDataset(O, t))
    return ConsensusProblem(LossFamily.LEAST_SQUARES, tuple(datasets))


def synthesize_logistic(n_agents: int, samples_per_agent: int = 30, dim: int = 2,
                        seed: int | np.random.Generator = 0,
                        hidden: np.ndarray | None = None) -> ConsensusProblem:
    """Gaussian features, labels drawn from a logistic model around a hidden vector.

    The hidden vector is ``N(0, I)`` unless ``hidden`` forces it (test hook).
    A sample gets label +1 iff ``v <= sigmoid(hidden^T o)`` with ``v ~ U(0, 1)``.
    """
    if samples_per_agent < 1 or dim < 1:
        raise ValueError("samples_per_agent and dim must be positive")
    rng = as_generator(seed, "data")
    x0 = rng.standard_normal(dim)
    if hidden is not None:
        x0 = np.asarray(hidden, dtype=float)
    datasets = []
    for _ in range(n_agents):
        O = rng.standard_normal((samples_per_agent, dim))
        v = rng.uniform(0.0, 1.0, size=samples_per_agent)
        t = np.where(v <= 1.0 / (1.0 + np.exp(-(O @ x0))), 1.0, -1.0)
        datasets.append(LocalDataset(O, t))
    return ConsensusProblem(LossFamily.LOGISTIC, tuple(datasets))


def synthesize(loss_family, n_agents: int, samples_per_agent: int, dim: int,
               seed: int | np.random.Generator) -> ConsensusProblem:
    if LossFamily(loss_family) is LossFamily.LEAST_SQUARES:
        return synthesize_least_squares(n_agents, samples_per_agent, dim, seed)
    return synthesize_logistic(n_agents, samples_per_agent, dim, seed)


def power_iteration(A: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    n = A.shape[0]
    if not np.any(A):
        return 0.0
    # deterministic start, generically not orthogonal to the top eigenvector
    v = np.ones(n) + np.arange(n) / (7.0 * n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / nw
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
    return lam


def lipschitz_constant(problem: ConsensusProblem) -> float:
    """Largest gradient-Lipschitz constant across local losses."""
    scale = 2.0 if problem.loss_family is LossFamily.LEAST_SQUARES else 0.25
    return max(scale / d.n_samples * power_iteration(d.gram) for d in problem.datasets)


def solve_oracle(problem: ConsensusProblem) -> np.ndarray:
    """Minimizer of ``sum_i f_i``.

    Least squares solves the aggregate normal equations directly (with a
    1e-12 ridge plus iterative refinement if they are singular). Logistic
    runs full-gradient descent with Armijo backtracking until the aggregate
    gradient norm drops to 1e-10.
    """
    if problem.loss_family is LossFamily.LEAST_SQUARES:
        return _solve_least_squares(problem)
    return _solve_logistic(problem)


def _solve_least_squares(problem: ConsensusProblem) -> np.ndarray:
    A = sum(d.ls_hessian for d in problem.datasets)
    b = sum(d.ls_moment for d in problem.datasets)
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= 1e-12 * max(1.0, eig[-1]):
        warnings.warn("normal equations are singular; regularizing with 1e-12*I", RuntimeWarning,
                      stacklevel=3)
        R = A + 1e-12 * np.eye(A.shape[0])
        x = np.linalg.solve(R, b)
        # iterated ridge converges to the minimum-norm solution on consistent systems
        for _ in range(3):
            x = x + np.linalg.solve(R, b - A @ x)
        return x
    return np.linalg.solve(A, b)


def _solve_logistic(problem: ConsensusProblem, tol: float = 1e-10, max_iter: int = 200_000) -> np.ndarray:
    O = np.concatenate([d.features for d in problem.datasets])
    t = np.concatenate([d.targets for d in problem.datasets])
    w = np.concatenate([np.full(d.n_samples, 1.0 / d.n_samples) for d in problem.datasets])

    def value(x):
        return float(w @ np.logaddexp(0.0, -t * (O @ x)))

    def grad(x):
        return O.T @ (w * -t * expit(-t * (O @ x)))

    # 1/L always satisfies the descent lemma; it floors the backtracking so that
    # Armijo failures caused by objective round-off near the optimum cannot stall
    L = sum(0.25 / d.n_samples * np.linalg.eigvalsh(d.gram)[-1] for d in problem.datasets)
    floor = 1.0 / L if L > 0 else 1.0
    x = np.zeros(problem.dim)
    step = 1.0
    fx, g = value(x), grad(x)
    for _ in range(max_iter):
        gg = float(g @ g)
        if np.sqrt(gg) <= tol:
            return x
        step *= 2.0
        while True:
            x_new = x - step * g
            f_new = value(x_new)
            if f_new <= fx - 0.5 * step * gg or step <= floor:
                break
            step = max(0.5 * step, floor)
        x, fx, g = x_new, f_new, grad(x_new)
    raise RuntimeError("logistic oracle did not reach the gradient tolerance")
