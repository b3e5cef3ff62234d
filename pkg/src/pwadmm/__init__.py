"""Parallel random-walk ADMM for decentralized consensus optimization.

The package bundles the per-event walk updates (PW-ADMM / IPW-ADMM), the
discrete-event network simulator that drives them, synchronous baselines
(consensus ADMM, DGD, EXTRA), and an experiment runner.
"""

from pwadmm.problems import ConsensusProblem, LocalDataset, LossFamily
from pwadmm.simulator import MetricsTrace, RunConfig, run_async, run_sync, run
from pwadmm.topology import Network, TransitionMatrix, generate_network

__all__ = [
    "ConsensusProblem",
    "LocalDataset",
    "LossFamily",
    "MetricsTrace",
    "Network",
    "RunConfig",
    "TransitionMatrix",
    "generate_network",
    "run",
    "run_async",
    "run_sync",
]

__version__ = "0.1.0"
