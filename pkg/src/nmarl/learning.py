"""Spatially discounted A2C: returns, advantages, losses and consensus averaging."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcomp as dc
from .errors import ConfigError
from .graph import AgentGraph

LOG_FLOOR = -30.0


@dataclass
class Hyperparams:
    gamma: float = 0.99
    alpha: float = 1.0
    beta: float = 0.01
    batch_size: int = 120
    horizon: int = 720
    lr_actor: float = 5e-4
    lr_critic: float = 2.5e-4

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.batch_size < 1 or self.horizon < 1:
            raise ConfigError("batch_size and horizon must be >= 1")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be positive")


@dataclass
class RolloutBuffer:
    """On-policy minibatch of synchronous multi-agent experience.

    Arrays are indexed ``[step, agent]``. ``dones[t]`` marks that the episode
    ended after step ``t``; ``bootstrap`` holds v_{i, tau_B} (ignored when the
    last step is terminal).
    """
    n_agents: int
    obs: list = field(default_factory=list)
    pi_prev: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    logp: list = field(default_factory=list)          # per step: per-agent log-prob tensors
    value_nodes: list = field(default_factory=list)   # per step: per-agent value tensors
    bootstrap: np.ndarray | None = None

    def add(self, obs, pi_prev, actions, rewards, values, done, logp=None, value_nodes=None):
        if len(actions) != self.n_agents or len(rewards) != self.n_agents:
            raise ValueError("per-agent entries must cover every agent")
        self.obs.append([np.asarray(o, dtype=float).copy() for o in obs])
        self.pi_prev.append([np.asarray(p, dtype=float).copy() for p in pi_prev])
        self.actions.append(list(actions))
        self.rewards.append(np.asarray(rewards, dtype=float))
        self.values.append(np.asarray(values, dtype=float))
        self.dones.append(bool(done))
        self.logp.append(logp)
        self.value_nodes.append(value_nodes)

    def __len__(self):
        return len(self.rewards)

    def clear(self):
        for name in ("obs", "pi_prev", "actions", "rewards", "values", "dones", "logp",
                     "value_nodes"):
            getattr(self, name).clear()
        self.bootstrap = None

    def arrays(self):
        return (np.array(self.rewards, dtype=float).reshape(len(self), self.n_agents),
                np.array(self.values, dtype=float).reshape(len(self), self.n_agents),
                np.array(self.dones, dtype=bool))


def spatial_rewards(rewards, graph: AgentGraph, alpha: float):
    """r~_{i,t} = sum_j alpha**d_ij r_{j,t} for a ``[T, n]`` reward array."""
    rewards = np.asarray(rewards, dtype=float)
    if alpha == 1.0:
        # every agent sees the plain global reward
        return np.repeat(rewards.sum(axis=1, keepdims=True), graph.n_agents, axis=1)
    return rewards @ graph.spatial_weights(alpha).T


def spatial_returns(buffer_or_rewards, graph: AgentGraph, gamma: float, alpha: float,
                    bootstrap=None, dones=None):
    """Bootstrapped n-step returns of the spatially discounted reward.

    Evaluated backwards: R_t = r~_t + gamma * R_{t+1}, with R_{t_B} = bootstrap
    and the recursion cut after every terminal step.
    """
    if isinstance(buffer_or_rewards, RolloutBuffer):
        buf = buffer_or_rewards
        rewards, _, dones = buf.arrays()
        bootstrap = buf.bootstrap
    else:
        rewards = np.asarray(buffer_or_rewards, dtype=float)
        dones = np.zeros(len(rewards), bool) if dones is None else np.asarray(dones, bool)
    if bootstrap is None:
        raise ValueError("spatial_returns needs bootstrap values v_{i, tau_B}")
    bootstrap = np.asarray(bootstrap, dtype=float)
    if bootstrap.shape != (graph.n_agents,):
        raise ValueError(f"bootstrap must have shape ({graph.n_agents},)")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    rt = spatial_rewards(rewards, graph, alpha)
    out = np.empty_like(rt)
    running = bootstrap.copy()
    for t in range(len(rt) - 1, -1, -1):
        if dones[t]:
            running = np.zeros_like(running)
        running = rt[t] + gamma * running
        out[t] = running
    return out


def advantages(returns, values):
    return np.asarray(returns) - np.asarray(values)


@dataclass
class LossStats:
    log_clamps: int = 0


STATS = LossStats()


def actor_loss(logps, actions, adv, beta):
    """Mean over the batch of ``-log pi(a) * A + beta * sum_a pi log pi``.

    ``logps`` are log-softmax tensors, one per step; ``adv`` is a constant.
    A log-probability below -30 is clamped there (and counted in ``STATS``).
    """
    n = len(logps)
    if n == 0:
        raise ValueError("empty batch")
    terms, coefs = [], []
    for lp, a, A in zip(logps, actions, adv):
        if lp.value[a] < LOG_FLOOR:
            STATS.log_clamps += 1
        else:
            terms.append(dc.pick(lp, a))
            coefs.append(-float(A) / n)
        if beta:
            terms.append(dc.neg_entropy(lp))
            coefs.append(beta / n)
    const = sum(-LOG_FLOOR * float(A) / n for lp, a, A in zip(logps, actions, adv)
                if lp.value[a] < LOG_FLOOR)
    if not terms:
        return dc.Tensor(np.asarray(const))
    loss = dc.lincomb(terms, coefs)
    return loss + const if const else loss


def critic_loss(value_nodes, returns):
    """Mean squared error between scalar value tensors and constant returns."""
    n = len(value_nodes)
    if n == 0:
        raise ValueError("empty batch")
    sq = [dc.square(v - float(R)) for v, R in zip(value_nodes, returns)]
    return dc.lincomb(sq, [1.0 / n] * n)


def entropy(logps):
    """Mean policy entropy (diagnostic, no gradient)."""
    return float(np.mean([-np.dot(np.exp(lp.value), lp.value) for lp in logps]))


def consensus_update(store: dc.ParamStore, graph: AgentGraph, layer: str = "lstm"):
    """Replace each agent's ``layer`` parameters by the closed-neighborhood mean.

    All agents are updated simultaneously from a snapshot of the old values.
    """
    n = graph.n_agents
    suffixes = None
    for i in range(n):
        pre = f"agent{i}/"
        names = sorted(k[len(pre):] for k in store.names(pre)
                       if k[len(pre):].split("/")[0].startswith(layer))
        if suffixes is None:
            suffixes = names
        elif names != suffixes:
            raise ConfigError(f"agent {i} has different {layer} parameters: cannot average")
    if not suffixes:
        raise ConfigError(f"no {layer!r} parameters to average")
    for suf in suffixes:
        shapes = {store[f"agent{i}/{suf}"].value.shape for i in range(n)}
        if len(shapes) != 1:
            raise ConfigError(f"heterogeneous shapes for {suf}: {sorted(shapes)}")
        old = np.stack([store[f"agent{i}/{suf}"].value.copy() for i in range(n)])
        for i in range(n):
            idx = list(graph.closed_neighborhood(i))
            store[f"agent{i}/{suf}"].value[...] = old[idx].mean(axis=0)
