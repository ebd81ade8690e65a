"""Cooperative adaptive cruise control: an 8-vehicle platoon under OVM control.

Each agent picks the (headway gain, relative-velocity gain) pair of its own
optimal-velocity-model controller every 0.1 s. Vehicle 0 follows a virtual
leader that drives the target speed profile v*_t.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..graph import AgentGraph

H_STOP = 5.0
H_GO = 35.0
V_MAX = 30.0
A_MAX = 2.5
H_TARGET = 20.0
V_NOMINAL = 15.0
H_COLLIDE = 1.0
DT = 0.1
COLLISION_PENALTY = 1000.0
SAFETY_WEIGHT = 5.0

# (headway gain, relative-velocity gain)
GAIN_LEVELS = ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5))
OBS_SCALE = np.array([H_TARGET, V_NOMINAL, A_MAX])


def desired_velocity(h):
    """Cosine-ramp optimal velocity: 0 below h_st, V_MAX above h_go."""
    h = np.asarray(h, dtype=float)
    x = (h - H_STOP) / (H_GO - H_STOP)
    # 1 - cos(pi x) written as 1 - sin(pi (1/2 - x)) so the midpoint is exactly V_MAX / 2
    ramp = 0.5 * V_MAX * (1.0 - np.sin(np.pi * (0.5 - x)))
    return np.where(h <= H_STOP, 0.0, np.where(h >= H_GO, V_MAX, ramp))


def ovm_accel(h, v, v_front, gains):
    """Clamped OVM acceleration for headway ``h``, own speed ``v``, front speed ``v_front``.

    ``gains`` is a ``(alpha, beta)`` pair or an array of shape ``(n, 2)``.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(np.asarray(h) <= 0):
        raise ValueError("non-positive headway: vehicle has already collided")
    alpha, beta = g[..., 0], g[..., 1]
    u = alpha * (desired_velocity(h) - v) + beta * (np.asarray(v_front) - v)
    return np.clip(u, -A_MAX, A_MAX)


@dataclass
class CaccState:
    h: np.ndarray
    v: np.ndarray
    a: np.ndarray
    v_profile: np.ndarray      # leader target speed for steps 0..horizon
    step: int = 0
    collided: bool = False
    u: np.ndarray = field(default=None)

    def copy(self):
        return CaccState(self.h.copy(), self.v.copy(), self.a.copy(), self.v_profile,
                         self.step, self.collided,
                         None if self.u is None else self.u.copy())

    @property
    def v_target(self):
        return float(self.v_profile[min(self.step, len(self.v_profile) - 1)])


def catchup_profile(horizon):
    return np.full(horizon + 1, V_NOMINAL)


def slowdown_profile(v0, horizon, ramp_seconds=30.0):
    t = np.arange(horizon + 1) * DT
    return v0 - (v0 - V_NOMINAL) * np.minimum(t / ramp_seconds, 1.0)


class CaccEnv:
    """Platoon environment with ``reset(seed)`` / ``step(actions)``.

    ``scenario`` is ``"catchup"`` or ``"slowdown"``; ``train_mode`` adds the
    near-collision shaping cost. Rewards are negative per-vehicle costs.
    """

    n_actions = len(GAIN_LEVELS)
    obs_dim = 3

    def __init__(self, scenario="catchup", n_vehicles=8, horizon=600, train_mode=False,
                 comm_reach=2, collision_penalty=COLLISION_PENALTY):
        if scenario not in ("catchup", "slowdown"):
            raise ValueError(f"unknown CACC scenario {scenario!r}")
        self.scenario = scenario
        self.n_agents = n_vehicles
        self.horizon = horizon
        self.train_mode = train_mode
        self.comm_reach = comm_reach
        self.collision_penalty = collision_penalty
        self.state: CaccState | None = None

    def graph(self) -> AgentGraph:
        return AgentGraph.chain(self.n_agents, reach=self.comm_reach,
                                obs_dims=self.obs_dim, action_sizes=self.n_actions)

    # scenarios

    def reset_catchup(self, seed, scale=None) -> CaccState:
        rng = np.random.default_rng(seed)
        a = rng.uniform(3.0, 4.0) if scale is None else scale
        n = self.n_agents
        h = np.full(n, H_TARGET)
        h[0] = a * H_TARGET
        self.state = CaccState(h, np.full(n, V_NOMINAL), np.zeros(n),
                               catchup_profile(self.horizon))
        return self.state

    def reset_slowdown(self, seed, scale=None) -> CaccState:
        rng = np.random.default_rng(seed)
        b = rng.uniform(1.5, 2.5) if scale is None else scale
        v0 = b * V_NOMINAL
        n = self.n_agents
        # the target profile starts at b * 15 but vehicle speeds obey the 30 m/s cap
        self.state = CaccState(np.full(n, H_TARGET), np.full(n, min(v0, V_MAX)), np.zeros(n),
                               slowdown_profile(v0, self.horizon))
        return self.state

    def reset(self, seed=None):
        if self.scenario == "catchup":
            self.reset_catchup(seed)
        else:
            self.reset_slowdown(seed)
        return self.observations()

    # dynamics

    def observe(self, state: CaccState, i: int):
        x = np.array([state.h[i] - H_TARGET, state.v[i] - state.v_target, state.a[i]])
        return x / OBS_SCALE

    def observations(self, state=None):
        state = state or self.state
        return [self.observe(state, i) for i in range(self.n_agents)]

    @property
    def done(self):
        return self.state.step >= self.horizon

    def transition(self, state: CaccState, actions):
        """Pure transition: returns ``(next_state, rewards)``."""
        if state.step >= self.horizon:
            raise ValueError("step called on a terminal state")
        n = self.n_agents
        nxt = state.copy()
        nxt.step = state.step + 1
        if state.collided:
            nxt.u = np.zeros(n)
            return nxt, np.zeros(n)
        actions = np.asarray(actions)
        if actions.shape != (n,):
            raise ValueError(f"expected {n} actions, got shape {actions.shape}")
        gains = np.asarray([GAIN_LEVELS[int(k)] for k in actions])
        v_lead = state.v_profile[state.step]
        v_front = np.concatenate([[v_lead], state.v[:-1]])
        u = ovm_accel(state.h, state.v, v_front, gains)
        v_new = np.clip(state.v + u * DT, 0.0, V_MAX)
        nxt.h = state.h + (v_front - state.v) * DT
        nxt.a = (v_new - state.v) / DT
        nxt.v = v_new
        nxt.u = u
        if (nxt.h < H_COLLIDE).any():
            nxt.collided = True
            return nxt, np.full(n, -self.collision_penalty)
        v_star = state.v_profile[nxt.step]
        cost = (nxt.h - H_TARGET) ** 2 + (nxt.v - v_star) ** 2 + 0.1 * u ** 2
        if self.train_mode:
            cost = cost + SAFETY_WEIGHT * np.maximum(2 * H_STOP - nxt.h, 0.0) ** 2
        return nxt, -cost

    def step(self, actions):
        """Advance; returns ``(observations, rewards, done, info)``.

        ``done`` is true at the horizon or on collision (the absorbing state
        yields zero reward from then on).
        """
        self.state, rewards = self.transition(self.state, actions)
        done = self.done or self.state.collided
        return self.observations(), rewards, done, {"collided": self.state.collided}


TRAJECTORY_COLUMNS = ("step", "vehicle", "h", "v", "a", "u", "reward", "collided")


def write_trajectory_csv(path, rows):
    """``rows``: iterable of dicts with :data:`TRAJECTORY_COLUMNS` keys."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRAJECTORY_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in TRAJECTORY_COLUMNS})
