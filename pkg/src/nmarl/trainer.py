"""Synchronous multi-agent A2C training loop.

Each environment step runs the message phase, the belief/action phase and the
value phase for all agents, then executes the joint action. Every
``batch_size`` steps the spatially discounted losses of all agents are
back-propagated through the whole recurrent, communicating unroll of the
batch and one RMSprop step is taken.
"""
from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffcomp as dc
from .agents import MultiAgentSystem
from .config import RunConfig
from .envs import make_env
from .errors import ConfigError
from .learning import (RolloutBuffer, actor_loss, consensus_update, critic_loss, entropy,
                       spatial_returns)
from .seeding import stream

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "episode", "mean_episode_return", "actor_loss", "critic_loss",
               "entropy", "grad_norm")


def build_system(cfg: RunConfig, env=None):
    env = env or make_env(cfg.env, train_mode=True, **cfg.env_kwargs())
    graph = env.graph()
    if graph.n_agents != env.n_agents:
        raise ConfigError("graph and environment disagree on the number of agents")
    system = MultiAgentSystem(graph, cfg.agent_config(), stream(cfg.seed, "init"))
    return env, system


def checkpoint_metadata(cfg: RunConfig, system: MultiAgentSystem, step=None):
    return {"protocol": cfg.protocol, "env": cfg.env, "n_agents": system.n_agents,
            "hidden": cfg.hidden, "passes": cfg.passes, "message_encoder": cfg.message_encoder,
            "dial_action": cfg.dial_action, "comm_reach": cfg.comm_reach,
            "edges": sorted(map(list, system.graph.edges)), "step": step}


@dataclass
class TrainResult:
    episode_returns: list = field(default_factory=list)
    log_rows: list = field(default_factory=list)
    steps: int = 0
    checkpoint: str | None = None
    wall_seconds: float = 0.0


class Trainer:
    def __init__(self, cfg: RunConfig, run_dir: str | None = None):
        self.cfg = cfg
        self.hp = cfg.hyperparams()
        self.env, self.system = build_system(cfg)
        self.graph = self.system.graph
        self.store = self.system.store
        self.optim = dc.RMSprop(cfg.rms_decay, cfg.rms_eps, cfg.grad_clip)
        self.rng = stream(cfg.seed, "policy")
        self.run_dir = run_dir
        self.buffer = RolloutBuffer(self.graph.n_agents)
        self.tape = dc.Tape()
        self.episode = 0
        self.step_count = 0
        self.batches = 0
        self.last_grads = None
        self._ep_return = 0.0
        self._ep_returns_batch = []
        self.result = TrainResult()
        self._start_episode()

    # helpers

    def _start_episode(self):
        self.obs = self.env.reset(seed=self.cfg.seed + self.episode)
        self.state = self.system.initial_state()
        self.t = 0
        self._ep_return = 0.0

    def lr_for(self, name):
        return self.hp.lr_critic if "/critic/" in name else self.hp.lr_actor

    # the loop

    def env_step(self):
        """One synchronous step of all agents and the environment."""
        with self.tape:
            res = self.system.step(self.obs, self.state, rng=self.rng)
        obs_next, rewards, done, info = self.env.step(res.actions)
        self.t += 1
        self.step_count += 1
        self._ep_return += float(np.sum(rewards))
        terminal = bool(done) or self.t >= self.hp.horizon
        self.buffer.add(self.obs, self.state.pi, res.actions,
                        np.asarray(rewards) * self.cfg.reward_scale,
                        [v.value.item() for v in res.values], terminal, res.logp, res.values)
        if terminal:
            r_bar = self._ep_return / self.hp.horizon
            self.result.episode_returns.append(r_bar)
            self._ep_returns_batch.append(r_bar)
            self.episode += 1
            self._start_episode()
        else:
            self.obs = obs_next
            self.state = self.system.next_state(res)
        return res

    def bootstrap_values(self):
        """v_{i, tau_B} for the state following the batch (0 after a terminal step)."""
        n = self.graph.n_agents
        if self.buffer.dones[-1]:
            return np.zeros(n)
        with dc.no_grad():
            h, _, _ = self.system.beliefs(self.obs, self.state.detach())
            pis = [a.act(h[i])[0] for i, a in enumerate(self.system.agents)]
            # the critic is linear in the neighbor one-hot block, so plugging in the
            # neighbor policies gives the exact expectation over their actions
            return np.array([a.value(h[i], [pis[j] for j in a.neighbors]).value.item()
                             for i, a in enumerate(self.system.agents)])

    def losses(self):
        buf = self.buffer
        buf.bootstrap = self.bootstrap_values()
        returns = spatial_returns(buf, self.graph, self.hp.gamma, self.hp.alpha)
        _, values, _ = buf.arrays()
        adv = returns - values
        actor, critic = [], []
        for i in range(self.graph.n_agents):
            logps = [step[i] for step in buf.logp]
            acts = [step[i] for step in buf.actions]
            actor.append(actor_loss(logps, acts, adv[:, i], self.hp.beta))
            critic.append(critic_loss([step[i] for step in buf.value_nodes], returns[:, i]))
        return actor, critic, returns, adv

    def update(self):
        n = self.graph.n_agents
        with self.tape:
            actor, critic, returns, adv = self.losses()
            total = dc.lincomb(actor + critic, [1.0] * (2 * n))
        if not np.isfinite(total.value):
            self._abort("non-finite loss")
        try:
            if self.cfg.update_mode == "summed":
                dc.backward(total, self.tape)
                self.last_grads = self.store.grads()
                norm = self.optim.step(self.store, self.lr_for)
            else:
                norm = 0.0
                grads = []
                for i in range(n):
                    with self.tape:
                        li = actor[i] + critic[i]
                    dc.backward(li, self.tape)
                    grads.append(self.store.grads())
                for g in grads:
                    norm = max(norm, self.optim.step(self.store, self.lr_for, grads=dict(g)))
                self.last_grads = grads
        except dc.TrainingError as exc:
            self._abort(str(exc))
        if self.cfg.protocol == "consenet":
            consensus_update(self.store, self.graph)
        row = {"step": self.step_count, "episode": self.episode,
               "mean_episode_return": (float(np.mean(self._ep_returns_batch))
                                       if self._ep_returns_batch else ""),
               "actor_loss": float(sum(a.value for a in actor)) / n,
               "critic_loss": float(sum(c.value for c in critic)) / n,
               "entropy": entropy([lp for step in self.buffer.logp for lp in step]),
               "grad_norm": float(norm)}
        self._ep_returns_batch = []
        self.result.log_rows.append(row)
        self.tape.clear()
        self.buffer.clear()
        self.store.zero_grad()
        # truncate back-propagation at the batch boundary
        self.state = self.state.detach()
        self.batches += 1
        if self.run_dir and self.cfg.checkpoint_every and \
                self.batches % self.cfg.checkpoint_every == 0:
            self.save(os.path.join(self.run_dir, "checkpoints", f"batch{self.batches:06d}"))
        return row

    def _abort(self, reason):
        path = None
        if self.run_dir:
            path = os.path.join(self.run_dir, "checkpoints", "last_good")
            self.save(path)
        raise dc.TrainingError(f"{reason} at step {self.step_count}; last good parameters "
                               f"saved to {path}")

    def save(self, path):
        self.store.save(path, checkpoint_metadata(self.cfg, self.system, self.step_count))
        return path

    def run(self, total_steps=None, progress_every=0):
        total = self.cfg.total_steps if total_steps is None else total_steps
        t0 = time.time()
        while self.step_count < total:
            self.env_step()
            if len(self.buffer) == self.hp.batch_size:
                row = self.update()
                if progress_every and self.batches % progress_every == 0:
                    log.info("step %d episode %d return %s (%.0fs)", row["step"], row["episode"],
                             row["mean_episode_return"], time.time() - t0)
        self.result.steps = self.step_count
        self.result.wall_seconds = time.time() - t0
        if self.run_dir:
            self.result.checkpoint = self.save(os.path.join(self.run_dir, "checkpoints", "final"))
            write_log(os.path.join(self.run_dir, "log.csv"), self.result.log_rows)
            write_episodes(os.path.join(self.run_dir, "episodes.csv"),
                           self.result.episode_returns)
        return self.result


def train(cfg: RunConfig, run_dir: str | None = None, progress_every=0) -> TrainResult:
    """Train per ``cfg``; with ``run_dir`` also write config, logs and checkpoints."""
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        cfg.to_ini(os.path.join(run_dir, "config.ini"))
    return Trainer(cfg, run_dir).run(progress_every=progress_every)


def write_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_episodes(path, returns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "average_return"])
        for k, r in enumerate(returns):
            w.writerow([k, repr(float(r))])


def moving_average(x, window=100):
    x = np.asarray(x, dtype=float)
    if len(x) < window:
        return np.empty(0)
    return np.convolve(x, np.ones(window) / window, mode="valid")


def sweep_alpha(cfg: RunConfig, alphas, window=100, run_dir=None, progress_every=0):
    """Train one model per spatial discount factor with shared seeds.

    Returns ``{alpha: (episode_returns, smoothed_curve)}``.
    """
    out = {}
    for alpha in alphas:
        sub = os.path.join(run_dir, f"alpha_{alpha:g}") if run_dir else None
        res = train(cfg.replace(alpha=float(alpha)), sub, progress_every)
        out[float(alpha)] = (np.asarray(res.episode_returns),
                             moving_average(res.episode_returns, window))
    if run_dir:
        with open(os.path.join(run_dir, "curves.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "index", "smoothed_return"])
            for a, (_, curve) in out.items():
                for k, v in enumerate(curve):
                    w.writerow([a, k, repr(float(v))])
    return out
