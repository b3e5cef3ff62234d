"""Next-hop selection for walk tokens."""

from __future__ import annotations

import enum
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from pwadmm.topology import Network, TransitionMatrix


class RoutingKind(str, enum.Enum):
    RANDOM_WALK = "random_walk"
    INTELLIGENT = "intelligent"


def next_hop_random(current: int, P: TransitionMatrix, rng: np.random.Generator) -> int:
    """Sample the next agent from row ``current`` of ``P`` (one uniform draw per hop)."""
    support = P.support(current)
    cdf = P.cdf(current)
    u = rng.random() * cdf[-1]
    j = int(np.searchsorted(cdf, u, side="right"))
    return int(support[min(j, support.size - 1)])


def next_hop_intelligent(current: int, counters: Mapping[int, int]) -> int:
    """Least-visited neighbor; ties go to the lowest agent index.

    ``counters`` maps each neighbor ``j`` of ``current`` to its visit count
    ``k_j``. The current agent itself is never a candidate.
    """
    best = None
    for j in sorted(counters):
        if j == current:
            continue
        if best is None or counters[j] < counters[best]:
            best = j
    if best is None:
        raise ValueError(f"agent {current} has no neighbors to route to")
    return best


@dataclass
class RoutingPolicy:
    """Routing rule plus the per-walk random streams it consumes."""

    kind: RoutingKind
    network: Network
    transition: TransitionMatrix | None = None
    rngs: Sequence[np.random.Generator] = field(default_factory=list)

    def __post_init__(self):
        self.kind = RoutingKind(self.kind)
        if self.kind is RoutingKind.RANDOM_WALK and self.transition is None:
            raise ValueError("random-walk routing needs a transition matrix")

    def next_hop(self, walk_id: int, current: int, counts: Sequence[int]) -> int:
        if self.kind is RoutingKind.RANDOM_WALK:
            return next_hop_random(current, self.transition, self.rngs[walk_id])
        nbrs = self.network.adjacency[current]
        return next_hop_intelligent(current, {j: counts[j] for j in nbrs})
