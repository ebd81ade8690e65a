"""Deterministic queueing chain: node i forwards work to node i + 1.

Node 0 receives a fixed number of arrivals per step and the last node
discharges out of the system. A node cannot push more units than fit
downstream, so every queue stays within ``[0, q_max]`` and no unit is lost.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..graph import AgentGraph

SERVICE_LEVELS = (0, 1, 2)


@dataclass
class ChainState:
    q: np.ndarray
    arrival: int
    step: int = 0

    def copy(self):
        return ChainState(self.q.copy(), self.arrival, self.step)


def chain_step(state: ChainState, actions, q_max=10):
    """Pure transition; returns ``(next_state, rewards, info)``.

    ``info`` reports accepted arrivals and departures from the last node.
    Node i's next queue reads only q_{i-1}, q_i, q_{i+1} (downstream room)
    and the actions of i-1 and i.
    """
    q = state.q
    n = len(q)
    a = np.asarray(actions, dtype=np.int64)
    if a.shape != (n,):
        raise ValueError(f"expected {n} actions, got shape {a.shape}")
    if ((a < 0) | (a > SERVICE_LEVELS[-1])).any():
        raise ValueError(f"service levels must be in {SERVICE_LEVELS}")
    room = np.empty(n, dtype=np.int64)
    room[:-1] = q_max - q[1:]
    room[-1] = np.iinfo(np.int64).max
    out = np.minimum(np.minimum(q, a), room)
    nq = q - out
    nq[1:] += out[:-1]
    accepted = min(state.arrival, q_max - int(nq[0]))
    nq[0] += accepted
    nxt = ChainState(nq, state.arrival, state.step + 1)
    info = {"arrivals": accepted, "departures": int(out[-1])}
    return nxt, -nq.astype(float), info


class ChainEnv:
    n_actions = len(SERVICE_LEVELS)
    obs_dim = 1

    def __init__(self, n_nodes=5, horizon=64, q_max=10, arrival=1, initial_queue=2):
        self.n_agents = n_nodes
        self.horizon = horizon
        self.q_max = q_max
        self.arrival = arrival
        self.initial_queue = initial_queue
        self.state: ChainState | None = None

    def graph(self) -> AgentGraph:
        return AgentGraph.chain(self.n_agents, obs_dims=self.obs_dim, action_sizes=self.n_actions)

    def initial_state(self):
        q0 = np.broadcast_to(np.asarray(self.initial_queue, dtype=np.int64),
                             (self.n_agents,)).copy()
        return ChainState(q0, self.arrival)

    def reset(self, seed=None):
        # deterministic: the seed is accepted for interface parity only
        self.state = self.initial_state()
        return self.observations()

    def observations(self, state=None):
        state = state or self.state
        return [np.array([state.q[i] / self.q_max]) for i in range(self.n_agents)]

    @property
    def done(self):
        return self.state.step >= self.horizon

    def step(self, actions):
        if self.done:
            raise ValueError("step called on a terminal state")
        self.state, rewards, info = chain_step(self.state, actions, self.q_max)
        return self.observations(), rewards, self.done, info


TRAJECTORY_COLUMNS = ("step", "node", "q", "action", "reward")


def write_trajectory_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRAJECTORY_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in TRAJECTORY_COLUMNS})
