"""Discrete-event simulation of walk tokens travelling over the network.

Every token hop costs one communication unit and a delay drawn from
``U(delay_lo, delay_hi)``. Events fire in (time, sequence number) order; an
agent processes one token at a time, holding it for ``compute_time``.
Synchronous baselines run round by round, each round lasting as long as its
slowest message.
"""

from __future__ import annotations

import dataclasses
import heapq
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from pwadmm import baselines
from pwadmm.problems import ConsensusProblem, LossFamily, lipschitz_constant, synthesize
from pwadmm.rng import Streams
from pwadmm.routing import RoutingKind, RoutingPolicy
from pwadmm.topology import Network, build_mixing_matrix, build_transition_matrix, generate_network
from pwadmm.traces import MetricsTrace
from pwadmm.walk_admm import (
    AdmmParams,
    DescentCheck,
    descent_check,
    initial_agents,
    initial_tokens,
    process_token_event,
)

ASYNC_ALGORITHMS = ("w_admm", "pw_admm", "ipw_admm")
SYNC_ALGORITHMS = ("sync_admm", "dgd", "extra")
ALGORITHMS = ASYNC_ALGORITHMS + SYNC_ALGORITHMS

# runs stop once accuracy leaves this bound (or turns non-finite)
DIVERGED = 1e12


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run.

    For synchronous algorithms ``max_events`` bounds the number of rounds.
    ``stride`` defaults to N events for the asynchronous engine; synchronous
    runs record every round. ``stop_accuracy`` ends a run at the first
    sample at or below that accuracy.
    """

    algorithm: str
    n_agents: int = 100
    density: float = 0.3
    n_walks: int = 1
    rho: float = 1.0
    tau: float = 0.0
    alpha: float = 0.01
    loss: str = "least_squares"
    samples_per_agent: int = 30
    dim: int = 2
    seed: int = 0
    max_events: int = 100_000
    max_sim_time: float | None = None
    delay_lo: float = 1e-5
    delay_hi: float = 1e-4
    compute_time: float = 0.0
    stride: int | None = None
    allow_self_loop: bool = True
    stop_accuracy: float | None = None
    sync_charge: int | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        LossFamily(self.loss)
        if self.n_agents < 1:
            raise ValueError("n_agents must be positive")
        if not 1 <= self.n_walks <= self.n_agents:
            raise ValueError(f"need 1 <= n_walks <= n_agents, got {self.n_walks}")
        if self.algorithm == "w_admm" and self.n_walks != 1:
            raise ValueError("w_admm runs exactly one walk (n_walks = 1)")
        if not self.delay_lo < self.delay_hi:
            raise ValueError("delay_lo must be smaller than delay_hi")
        if self.delay_lo < 0 or self.compute_time < 0:
            raise ValueError("delays and compute_time must be nonnegative")
        if self.rho <= 0 or self.tau < 0 or self.alpha < 0:
            raise ValueError("need rho > 0, tau >= 0, alpha >= 0")
        if self.max_events < 0:
            raise ValueError("max_events must be nonnegative")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be positive")

    @property
    def is_async(self) -> bool:
        return self.algorithm in ASYNC_ALGORITHMS

    def metadata(self) -> dict[str, str]:
        return {k: str(v) for k, v in dataclasses.asdict(self).items()}


def build_instance(config: RunConfig) -> tuple[Network, ConsensusProblem]:
    streams = Streams(config.seed)
    net = generate_network(config.n_agents, config.density, streams.graph())
    problem = synthesize(config.loss, config.n_agents, config.samples_per_agent, config.dim, streams.data())
    return net, problem


def accuracy(X: np.ndarray, x_star: np.ndarray, X0: np.ndarray) -> float:
    """Mean over agents of ``||x_i - x*|| / ||x_i^0 - x*||``."""
    num = np.linalg.norm(np.asarray(X) - x_star, axis=1)
    den = np.linalg.norm(np.asarray(X0) - x_star, axis=1)
    return float(np.mean(num / den))


def _check_denominators(X0: np.ndarray, x_star: np.ndarray) -> None:
    den = np.linalg.norm(X0 - x_star, axis=1)
    if np.any(den < 1e-15):
        raise ValueError("initial iterate coincides with the optimum; accuracy is undefined")


def _should_stop(config: RunConfig, acc: float) -> bool:
    if not np.isfinite(acc) or acc > DIVERGED:
        return True
    return config.stop_accuracy is not None and acc <= config.stop_accuracy


@dataclass(frozen=True)
class WalkEvent:
    fire_time: float
    sequence_no: int
    walk_id: int
    destination: int


class AsyncSimulator:
    """Event engine for W-ADMM / PW-ADMM / IPW-ADMM.

    The simulator owns all mutable state. ``agents`` and ``tokens`` are
    lists whose entries are replaced (never mutated) on every event, so a
    shallow copy of either list is a consistent snapshot.
    """

    def __init__(self, config: RunConfig, network: Network, problem: ConsensusProblem,
                 check_descent: bool = False):
        if not config.is_async:
            raise ValueError(f"{config.algorithm} is not an asynchronous algorithm")
        if network.n_agents != problem.n_agents or network.n_agents != config.n_agents:
            raise ValueError("network, problem and config disagree on the number of agents")
        self.config = config
        self.network = network
        self.problem = problem
        N, n, M = config.n_agents, problem.dim, config.n_walks
        self.params = AdmmParams(config.rho, config.tau, M, N)
        streams = Streams(config.seed)

        self.agents = initial_agents(N, n, config.tau)
        self.tokens = initial_tokens(streams.placement().choice(N, size=M, replace=False), n)
        self.counts = [0] * N

        if config.algorithm == "ipw_admm":
            if any(not nb for nb in network.adjacency):
                raise ValueError("intelligent routing needs every agent to have a neighbor")
            self.routing = RoutingPolicy(RoutingKind.INTELLIGENT, network)
        else:
            P = build_transition_matrix(network, config.allow_self_loop)
            self.routing = RoutingPolicy(RoutingKind.RANDOM_WALK, network, P,
                                         [streams.routing(m) for m in range(M)])
        self._delay_rngs = [streams.delays(m) for m in range(M)]

        self._queue: list[tuple[float, int, int, int]] = []
        self._seq = 0
        for tok in self.tokens:
            self._push(0.0, tok.walk_id, tok.location)
        self._busy_until = [0.0] * N

        self.now = 0.0
        self.events = 0
        self.comm_units = 0
        self.last_fire_time = 0.0

        self.x_star = problem.oracle_solution
        self._X0 = np.zeros((N, n))
        _check_denominators(self._X0, self.x_star)

        self.check_descent = check_descent
        self.descent_checks: list[DescentCheck] = []
        self._lipschitz = lipschitz_constant(problem) if check_descent else None

    def _push(self, t: float, walk_id: int, dest: int) -> None:
        heapq.heappush(self._queue, (t, self._seq, walk_id, dest))
        self._seq += 1

    def peek_time(self) -> float | None:
        return self._queue[0][0] if self._queue else None

    def step(self) -> WalkEvent:
        """Execute the next token arrival and dispatch the token onward."""
        while True:
            t, seq, m, dest = heapq.heappop(self._queue)
            busy = self._busy_until[dest]
            if busy > t:
                # agent still holds another token; arrive again when it is free
                self._push(busy, m, dest)
                continue
            break
        cfg = self.config
        self.last_fire_time = t
        before = (list(self.agents), list(self.tokens)) if self.check_descent else None

        agent, token = process_token_event(self.agents[dest], self.tokens[m], self.problem, self.params)
        self.agents[dest] = agent
        self.counts[dest] = agent.k
        finish = t + cfg.compute_time
        self._busy_until[dest] = finish

        nxt = self.routing.next_hop(m, dest, self.counts)
        delay = self._delay_rngs[m].uniform(cfg.delay_lo, cfg.delay_hi)
        self.comm_units += 1
        self.tokens[m] = dataclasses.replace(token, location=nxt)
        self._push(finish + delay, m, nxt)

        self.now = max(self.now, finish)
        self.events += 1
        if before is not None:
            self.descent_checks.append(descent_check(
                before, (self.agents, self.tokens), dest, m, self.problem, self._lipschitz, self.params))
        return WalkEvent(t, seq, m, dest)

    @property
    def X(self) -> np.ndarray:
        return np.array([a.x for a in self.agents])

    def accuracy(self) -> float:
        return accuracy(self.X, self.x_star, self._X0)

    def run(self, on_event: Callable[[AsyncSimulator, WalkEvent], None] | None = None) -> MetricsTrace:
        cfg = self.config
        stride = cfg.stride or cfg.n_agents
        trace = MetricsTrace(metadata=cfg.metadata())
        trace.append(0, 0.0, 0, self.accuracy())
        sampled_at = 0
        while self.events < cfg.max_events:
            if cfg.max_sim_time is not None and self.peek_time() > cfg.max_sim_time:
                break
            ev = self.step()
            if on_event is not None:
                on_event(self, ev)
            if self.events % stride == 0:
                acc = self.accuracy()
                trace.append(self.events, self.now, self.comm_units, acc)
                sampled_at = self.events
                if _should_stop(cfg, acc):
                    break
        if sampled_at != self.events:
            trace.append(self.events, self.now, self.comm_units, self.accuracy())
        return trace


def run_async(config: RunConfig, network: Network, problem: ConsensusProblem,
              on_event: Callable | None = None) -> MetricsTrace:
    return AsyncSimulator(config, network, problem).run(on_event)


def sync_round_charge(config: RunConfig, network: Network) -> int:
    if config.sync_charge is not None:
        return config.sync_charge
    if config.algorithm == "sync_admm":
        return 2 * network.n_agents
    return 2 * network.n_edges


def run_sync(config: RunConfig, network: Network, problem: ConsensusProblem,
             on_round: Callable | None = None) -> MetricsTrace:
    """Round-based driver; each round's duration is the max of its message delays."""
    if config.is_async:
        raise ValueError(f"{config.algorithm} is not a synchronous algorithm")
    N, n = problem.n_agents, problem.dim
    charge = sync_round_charge(config, network)
    rng = Streams(config.seed).sync_delays()
    x_star = problem.oracle_solution
    state = baselines.SyncState.zeros(N, n, admm=config.algorithm == "sync_admm")
    X0 = state.x.copy()
    _check_denominators(X0, x_star)
    if config.algorithm == "sync_admm":
        step = lambda s: baselines.sync_admm_round(s, problem, config.rho, charge)  # noqa: E731
    else:
        W = build_mixing_matrix(network)
        fn = baselines.dgd_round if config.algorithm == "dgd" else baselines.extra_round
        step = lambda s: fn(s, problem, W, config.alpha, charge)  # noqa: E731

    trace = MetricsTrace(metadata=config.metadata())
    trace.append(0, 0.0, 0, accuracy(state.x, x_star, X0))
    t = 0.0
    while state.round < config.max_events:
        dt = float(rng.uniform(config.delay_lo, config.delay_hi, size=max(charge, 1)).max())
        if config.max_sim_time is not None and t + dt > config.max_sim_time:
            break
        state = step(state)
        t += dt
        acc = accuracy(state.x, x_star, X0)
        trace.append(state.round, t, state.comm_units, acc)
        if on_round is not None:
            on_round(state, t)
        if _should_stop(config, acc):
            break
    return trace


def run(config: RunConfig, network: Network | None = None,
        problem: ConsensusProblem | None = None) -> MetricsTrace:
    """Run ``config`` on the given instance, or on the one its seed derives."""
    if network is None or problem is None:
        net0, prob0 = build_instance(config)
        network = network or net0
        problem = problem or prob0
    if config.is_async:
        return run_async(config, network, problem)
    return run_sync(config, network, problem)
