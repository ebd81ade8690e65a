"""Agent communication graph: neighborhoods, hop distances, spatial weights."""
from __future__ import annotations

import re
from collections import deque
from typing import Iterable, Sequence

import numpy as np


class AgentGraph:
    """Static undirected, unweighted communication graph over ``n_agents`` agents.

    Distances are all-pairs BFS hop counts, computed once at construction.
    Disconnected graphs are rejected.
    """

    def __init__(self, n_agents: int, edges: Iterable[tuple[int, int]],
                 obs_dims: Sequence[int] | int = 1,
                 action_sizes: Sequence[int] | int = 2):
        if n_agents < 1:
            raise ValueError(f"n_agents must be positive, got {n_agents}")
        self.n_agents = int(n_agents)
        edge_set = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on agent {i}")
            for k in (i, j):
                if not 0 <= k < n_agents:
                    raise ValueError(f"edge ({i}, {j}) references unknown agent {k}")
            edge_set.add((min(i, j), max(i, j)))
        self.edges = frozenset(edge_set)
        self.obs_dims = _broadcast(obs_dims, n_agents, "obs_dims")
        self.action_sizes = _broadcast(action_sizes, n_agents, "action_sizes")

        adj: list[list[int]] = [[] for _ in range(n_agents)]
        for i, j in sorted(self.edges):
            adj[i].append(j)
            adj[j].append(i)
        self._neighbors = tuple(tuple(sorted(a)) for a in adj)
        self._dist = self._bfs_all(adj)
        self._dist.setflags(write=False)

    def _bfs_all(self, adj):
        n = self.n_agents
        dist = np.full((n, n), -1, dtype=np.int64)
        for src in range(n):
            dist[src, src] = 0
            queue = deque([src])
            while queue:
                u = queue.popleft()
                for w in adj[u]:
                    if dist[src, w] < 0:
                        dist[src, w] = dist[src, u] + 1
                        queue.append(w)
        if (dist < 0).any():
            i, j = np.argwhere(dist < 0)[0]
            raise ValueError(f"graph is disconnected (no path between {i} and {j})")
        return dist

    # construction helpers

    @classmethod
    def chain(cls, n: int, reach: int = 1, **kw) -> "AgentGraph":
        """Path over ``n`` agents; ``reach`` links agents up to that many positions apart."""
        if reach < 1:
            raise ValueError("reach must be >= 1")
        edges = [(i, j) for i in range(n) for j in range(i + 1, min(n, i + reach + 1))]
        return cls(n, edges, **kw)

    @classmethod
    def grid(cls, rows: int, cols: int, **kw) -> "AgentGraph":
        edges = []
        for r in range(rows):
            for c in range(cols):
                k = r * cols + c
                if c + 1 < cols:
                    edges.append((k, k + 1))
                if r + 1 < rows:
                    edges.append((k, k + cols))
        return cls(rows * cols, edges, **kw)

    @classmethod
    def from_topology(cls, topology: str | Sequence[tuple[int, int]], n_agents: int | None = None,
                      **kw) -> "AgentGraph":
        """Build from ``"chain:N"``, ``"chain:N:R"`` (reach R), ``"grid:RxC"`` or an edge list."""
        if not isinstance(topology, str):
            if n_agents is None:
                n_agents = 1 + max(max(e) for e in topology)
            return cls(n_agents, topology, **kw)
        m = re.fullmatch(r"chain:(\d+)(?::(\d+))?", topology.strip())
        if m:
            return cls.chain(int(m.group(1)), int(m.group(2) or 1), **kw)
        m = re.fullmatch(r"grid:(\d+)x(\d+)", topology.strip())
        if m:
            return cls.grid(int(m.group(1)), int(m.group(2)), **kw)
        m = re.fullmatch(r"edges:(.*)", topology.strip())
        if m:
            pairs = [tuple(int(x) for x in p.split("-")) for p in m.group(1).split(",") if p]
            if n_agents is None:
                n_agents = 1 + max(max(p) for p in pairs) if pairs else 1
            return cls(n_agents, pairs, **kw)
        raise ValueError(f"unknown topology {topology!r}; expected chain:N, chain:N:R, grid:RxC "
                         "or edges:i-j,...")

    # queries

    def _check(self, i: int) -> int:
        if not 0 <= i < self.n_agents:
            raise IndexError(f"agent index {i} out of range [0, {self.n_agents})")
        return i

    def neighbors(self, i: int) -> tuple[int, ...]:
        """N_i in ascending order."""
        return self._neighbors[self._check(i)]

    def closed_neighborhood(self, i: int) -> tuple[int, ...]:
        """V_i = N_i plus i itself, ascending."""
        return tuple(sorted(self.neighbors(i) + (i,)))

    def distance(self, i: int, j: int) -> int:
        return int(self._dist[self._check(i), self._check(j)])

    @property
    def distances(self) -> np.ndarray:
        return self._dist

    @property
    def d_max(self) -> int:
        return int(self._dist.max())

    def spatial_weight(self, i: int, j: int, alpha: float) -> float:
        _check_alpha(alpha)
        return float(alpha ** self.distance(i, j))

    def spatial_weights(self, alpha: float) -> np.ndarray:
        """Matrix of alpha**d_ij (with 0**0 == 1 on the diagonal)."""
        _check_alpha(alpha)
        return np.power(float(alpha), self._dist.astype(np.float64))

    def __repr__(self):
        return f"AgentGraph(n_agents={self.n_agents}, edges={sorted(self.edges)})"


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"spatial discount alpha must lie in [0, 1], got {alpha}")


def _broadcast(x, n, name):
    if np.isscalar(x):
        return (int(x),) * n
    x = tuple(int(v) for v in x)
    if len(x) != n:
        raise ValueError(f"{name} has {len(x)} entries for {n} agents")
    return x
