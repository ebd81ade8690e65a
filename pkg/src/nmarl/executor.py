"""Decentralized execution and CACC evaluation metrics.

Execution is a stepped simulation of the asynchronous per-agent job: every
agent observes, encodes its message, sends ``(s_i, pi_i, m_i)`` to its
neighbors, reads whatever arrived in its mailbox, updates its belief and acts.
Links may delay a packet by one step or drop it, in which case the receiver
keeps the last value it got.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import diffcomp as dc
from .agents import AgentConfig, MultiAgentSystem
from .config import RunConfig
from .diffcomp import CheckpointError
from .envs import make_env
from .graph import AgentGraph
from .seeding import stream


@dataclass
class CommFaults:
    """Per-link, per-step packet faults: ``mode`` in {"none", "delay", "drop"}."""
    mode: str = "none"
    prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "delay", "drop"):
            raise ValueError(f"unknown fault mode {self.mode!r}")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("fault probability must lie in [0, 1]")
        self._rng = np.random.default_rng(self.seed)

    @classmethod
    def parse(cls, text: str | None, seed=0):
        """``"none"``, ``"drop"`` (all), ``"drop:0.2"``, ``"delay:0.5"``."""
        if not text or text == "none":
            return cls()
        mode, _, p = text.partition(":")
        return cls(mode, float(p) if p else 1.0, seed)

    def faulty(self) -> bool:
        if self.mode == "none" or self.prob == 0.0:
            return False
        return bool(self._rng.random() < self.prob)


@dataclass
class Packet:
    s: np.ndarray
    pi: np.ndarray
    m: dc.Tensor


class AgentRuntime:
    """Local state of one deployed agent: belief, last policy, mailbox."""

    def __init__(self, system: MultiAgentSystem, i: int):
        self.i = i
        self.policy = system.agents[i]
        g = system.graph
        self.h, self.c = self.policy.initial_state()
        self.pi = np.zeros(self.policy.n_actions)
        self.a_prev = None
        H = self.policy.hidden
        self.inbox = {j: Packet(np.zeros(g.obs_dims[j]), np.zeros(g.action_sizes[j]),
                                dc.Tensor(np.zeros(H)))
                      for j in self.policy.neighbors}
        self.s = None

    def send(self, s_i, h=None):
        self.s = np.asarray(s_i, dtype=float)
        return Packet(self.s, self.pi, self.policy.message(self.h if h is None else h))

    def receive(self, j, packet: Packet):
        self.inbox[j] = packet

    def local_inputs(self):
        pol = self.policy
        if pol.uses_closed_obs:
            parts = [self.s if j == self.i else self.inbox[j].s for j in pol.closed]
            s_in = np.concatenate(parts)
        else:
            s_in = self.s
        nb = pol.neighbors
        return s_in, [self.inbox[j].pi for j in nb], [self.inbox[j].m for j in nb]

    def update(self, h, c, pass_index=0):
        s_in, pis, msgs = self.local_inputs()
        return self.policy.update_belief(h, c, s_in, pis, msgs, self.a_prev, pass_index)

    def act(self, h, c, rng=None, greedy=False):
        self.h, self.c = h, c
        pi, a = self.policy.act(h, rng, greedy)
        self.pi, self.a_prev = pi, a
        return a


class DecentralizedExecutor:
    def __init__(self, system: MultiAgentSystem, faults: CommFaults | None = None):
        self.system = system
        self.graph = system.graph
        self.faults = faults or CommFaults()
        self.reset()

    def reset(self):
        self.agents = [AgentRuntime(self.system, i) for i in range(self.graph.n_agents)]
        self._last_sent = [None] * self.graph.n_agents

    def _exchange(self, packets):
        for rx in self.agents:
            for j in rx.policy.neighbors:
                if self.faults.faulty():
                    if self.faults.mode == "delay" and self._last_sent[j] is not None:
                        rx.receive(j, self._last_sent[j])
                    continue
                rx.receive(j, packets[j])

    def step(self, obs, rng=None, greedy=False):
        """One control step for all agents; returns the joint action list."""
        passes = self.system.cfg.passes
        h = [ag.h for ag in self.agents]
        c = [ag.c for ag in self.agents]
        for p in range(passes):
            packets = [ag.send(obs[ag.i], h[ag.i]) for ag in self.agents]
            self._exchange(packets)
            if p == 0:
                first = packets
            new = [ag.update(h[ag.i], c[ag.i], p) for ag in self.agents]
            h = [x[0] for x in new]
            c = [x[1] for x in new]
        self._last_sent = first
        return [ag.act(h[ag.i], c[ag.i], rng, greedy) for ag in self.agents]


@dataclass
class ExecutionResult:
    episode_returns: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)

    @property
    def mean_return(self):
        return float(np.mean(self.episode_returns))


def execute(system: MultiAgentSystem, env, episodes=50, seed=2000, greedy=False,
            comm_faults: CommFaults | None = None, policy_seed=0):
    """Run ``episodes`` evaluation episodes with seeds ``seed, seed + 1, ...``."""
    res = ExecutionResult()
    rng = None if greedy else stream(policy_seed, "policy")
    ex = DecentralizedExecutor(system, comm_faults)
    with dc.no_grad():
        for e in range(episodes):
            obs = env.reset(seed=seed + e)
            ex.reset()
            traj = _new_traj(env)
            total, done = 0.0, False
            while not done:
                acts = ex.step(obs, rng, greedy)
                traj["obs"].append([o.copy() for o in obs])
                traj["pi"].append([ag.pi.copy() for ag in ex.agents])
                obs, rewards, done, info = env.step(acts)
                total += float(np.sum(rewards))
                _record(env, traj, acts, rewards)
            traj["collided"] = bool(getattr(env.state, "collided", False))
            res.episode_returns.append(total / env.horizon)
            res.trajectories.append({k: (v if k in ("obs", "pi", "collided") else np.asarray(v))
                                     for k, v in traj.items()})
    return res


def _new_traj(env):
    keys = ("actions", "rewards", "h", "v", "a", "u") if hasattr(env.state, "v") else \
        ("actions", "rewards", "q")
    t = {k: [] for k in keys}
    t["obs"] = []
    t["pi"] = []
    return t


def _record(env, traj, acts, rewards):
    traj["actions"].append(list(acts))
    traj["rewards"].append(np.asarray(rewards, dtype=float).copy())
    st = env.state
    if "q" in traj:
        traj["q"].append(st.q.copy())
    else:
        traj["h"].append(st.h.copy())
        traj["v"].append(st.v.copy())
        traj["a"].append(st.a.copy())
        traj["u"].append(st.u.copy())


# metrics

METRIC_ROWS = (("avg_headway", "avg vehicle headway [m]"),
               ("std_headway", "std vehicle headway [m]"),
               ("avg_velocity", "avg vehicle velocity [m/s]"),
               ("std_velocity", "std vehicle velocity [m/s]"),
               ("collisions", "collision number"))


def cacc_metrics(trajectories):
    """Headway/velocity statistics over collision-free episodes, plus collision count."""
    safe = [t for t in trajectories if not t["collided"]]
    out = {"collisions": len(trajectories) - len(safe), "episodes": len(trajectories)}
    if not safe:
        out.update(avg_headway=None, std_headway=None, avg_velocity=None, std_velocity=None)
        return out
    h = np.concatenate([np.asarray(t["h"]).ravel() for t in safe])
    v = np.concatenate([np.asarray(t["v"]).ravel() for t in safe])
    out.update(avg_headway=float(h.mean()), std_headway=float(h.std()),
               avg_velocity=float(v.mean()), std_velocity=float(v.std()))
    return out


def metrics_table(columns: dict) -> str:
    """Aligned text table; ``columns`` maps controller name -> metrics dict."""
    names = list(columns)
    label_w = max(len(lbl) for _, lbl in METRIC_ROWS)
    col_w = max([10] + [len(n) for n in names])
    lines = [" " * label_w + " | " + " ".join(n.rjust(col_w) for n in names)]
    lines.append("-" * len(lines[0]))
    for key, lbl in METRIC_ROWS:
        cells = []
        for n in names:
            v = columns[n].get(key)
            cells.append(("-" if v is None else f"{v:d}" if isinstance(v, int) else f"{v:.2f}")
                         .rjust(col_w))
        lines.append(lbl.ljust(label_w) + " | " + " ".join(cells))
    return "\n".join(lines)


def write_metrics_csv(path, columns: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric"] + list(columns))
        for key, _ in METRIC_ROWS:
            w.writerow([key] + ["" if columns[n].get(key) is None else columns[n][key]
                                for n in columns])


# checkpoints

def load_system(path, cfg: RunConfig | None = None):
    """Rebuild the agent system stored at ``path``; returns ``(system, env, metadata)``."""
    values, meta = dc.ParamStore.read(path)
    if cfg is not None and cfg.protocol != meta.get("protocol"):
        raise CheckpointError(f"checkpoint protocol {meta.get('protocol')!r} does not match "
                              f"config protocol {cfg.protocol!r}")
    env_name = cfg.env if cfg is not None else meta["env"]
    env_kw = dict(cfg.env_kwargs()) if cfg is not None else {}
    if env_name.startswith("cacc"):
        env_kw.setdefault("comm_reach", meta.get("comm_reach", 2))
        env_kw.setdefault("n_vehicles", meta["n_agents"])
    else:
        env_kw.setdefault("n_nodes", meta["n_agents"])
    env = make_env(env_name, train_mode=False, **env_kw)
    base = env.graph()
    graph = AgentGraph(meta["n_agents"], [tuple(e) for e in meta["edges"]],
                       base.obs_dims, base.action_sizes)
    acfg = AgentConfig(meta["protocol"], meta["hidden"], meta.get("message_encoder", "sender"),
                       meta.get("dial_action", "summand"), meta.get("passes", 1))
    system = MultiAgentSystem(graph, acfg, 0)
    system.store.load_values(values, strict=True)
    return system, env, meta
