"""Communication topology: undirected follower graph plus leader-access flags.

Followers are indexed 1..N; index 0 is reserved for the leader. Which
followers may read the leader's state is recorded per follower in
``leader_links`` (the diagonal of the leader-access matrix).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    Disconnected,
    DuplicateEdge,
    IndexOutOfRange,
    NoLeaderAccess,
    SelfLoop,
)


@dataclass(frozen=True)
class CommGraph:
    num_followers: int
    edges: frozenset[tuple[int, int]]  # canonical (lo, hi) follower pairs
    leader_links: tuple[int, ...]  # b_i flags, entry i-1 for follower i
    neighbor_sets: tuple[frozenset[int], ...]  # per follower, 1-based ids
    neighbor_lists: tuple[tuple[int, ...], ...]  # same, ascending (hot-loop order)

    def has_leader_link(self, i: int) -> bool:
        return bool(self.leader_links[i - 1])


def build_graph(
    num_followers: int,
    edges: list[tuple[int, int]],
    leader_links: list[int],
) -> CommGraph:
    """Validate and construct a follower graph with leader access flags.

    Rejects self-loops, duplicate (unordered) edges, out-of-range indices,
    disconnected follower graphs, and graphs where no follower can see the
    leader (without at least one leader link the formation equilibrium is
    not pinned down).
    """
    if num_followers < 1:
        raise IndexOutOfRange(f"num_followers must be >= 1, got {num_followers}")
    if len(leader_links) != num_followers:
        raise IndexOutOfRange(
            f"expected {num_followers} leader links, got {len(leader_links)}"
        )
    links = tuple(int(b) for b in leader_links)
    if any(b not in (0, 1) for b in links):
        raise IndexOutOfRange(f"leader links must be 0/1 flags, got {links}")
    if not any(links):
        raise NoLeaderAccess("no follower has access to the leader state")

    canonical: set[tuple[int, int]] = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if not (1 <= i <= num_followers and 1 <= j <= num_followers):
            raise IndexOutOfRange(f"edge ({i},{j}) outside 1..{num_followers}")
        if i == j:
            raise SelfLoop(f"self-loop at follower {i}")
        pair = (min(i, j), max(i, j))
        if pair in canonical:
            raise DuplicateEdge(f"edge {pair} listed more than once")
        canonical.add(pair)

    nbrs: list[set[int]] = [set() for _ in range(num_followers)]
    for i, j in canonical:
        nbrs[i - 1].add(j)
        nbrs[j - 1].add(i)

    # connectivity over followers only (leader links do not count)
    seen = {1}
    stack = [1]
    while stack:
        v = stack.pop()
        for w in nbrs[v - 1]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != num_followers:
        missing = sorted(set(range(1, num_followers + 1)) - seen)
        raise Disconnected(f"follower graph is disconnected; unreachable: {missing}")

    return CommGraph(
        num_followers=num_followers,
        edges=frozenset(canonical),
        leader_links=links,
        neighbor_sets=tuple(frozenset(s) for s in nbrs),
        neighbor_lists=tuple(tuple(sorted(s)) for s in nbrs),
    )


def neighbors(g: CommGraph, i: int) -> frozenset[int]:
    """Follower neighbors of follower i (the leader is never included)."""
    if not 1 <= i <= g.num_followers:
        raise IndexOutOfRange(f"follower index {i} outside 1..{g.num_followers}")
    return g.neighbor_sets[i - 1]


def laplacian_plus_b(g: CommGraph) -> np.ndarray:
    """Graph Laplacian of the follower graph plus the leader-access diagonal.

    Symmetric positive definite for any valid graph (connected with at
    least one leader link); its rows generate the formation error map.
    """
    n = g.num_followers
    h = np.zeros((n, n))
    for i, j in g.edges:
        h[i - 1, j - 1] -= 1.0
        h[j - 1, i - 1] -= 1.0
        h[i - 1, i - 1] += 1.0
        h[j - 1, j - 1] += 1.0
    h[np.diag_indices(n)] += np.asarray(g.leader_links, dtype=float)
    return h
