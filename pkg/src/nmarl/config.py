"""Run configuration: defaults per environment, INI persistence, overrides."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields

from .agents import AgentConfig, canonical_protocol
from .envs import ENVIRONMENTS
from .errors import ConfigError
from .learning import Hyperparams

ENV_DEFAULTS = {
    "cacc_catchup": {"beta": 0.05, "batch_size": 60, "horizon": 600},
    "cacc_slowdown": {"beta": 0.05, "batch_size": 60, "horizon": 600},
    "chain": {"beta": 0.01, "batch_size": 120, "horizon": 64},
}

# field -> INI section
SECTIONS = {
    "environment": ("env", "n_agents", "comm_reach", "reward_scale", "collision_penalty",
                    "chain_arrival", "chain_initial_queue", "chain_q_max"),
    "protocol": ("protocol", "hidden", "message_encoder", "dial_action", "passes"),
    "hyperparams": ("gamma", "alpha", "beta", "batch_size", "horizon", "lr_actor",
                    "lr_critic", "grad_clip", "rms_decay", "rms_eps", "update_mode"),
    "run": ("seed", "total_steps", "checkpoint_every", "eval_episodes", "eval_seed",
            "greedy"),
    "faults": ("fault_mode", "fault_prob"),
}


@dataclass
class RunConfig:
    env: str = "cacc_catchup"
    n_agents: int = 0            # 0: environment default (8 vehicles / 5 nodes)
    comm_reach: int = 2          # CACC: link vehicles up to this many positions apart
    reward_scale: float = 1.0
    collision_penalty: float = 1000.0
    chain_arrival: int = 1
    chain_initial_queue: int = 2
    chain_q_max: int = 10

    protocol: str = "neurcomm"
    hidden: int = 64
    message_encoder: str = "sender"
    dial_action: str = "summand"
    passes: int = 1

    gamma: float = 0.99
    alpha: float = 1.0
    beta: float = 0.05
    batch_size: int = 60
    horizon: int = 600
    lr_actor: float = 5e-4
    lr_critic: float = 2.5e-4
    grad_clip: float = 40.0
    rms_decay: float = 0.99
    rms_eps: float = 1e-5
    update_mode: str = "summed"

    seed: int = 0
    total_steps: int = 1_000_000
    checkpoint_every: int = 0
    eval_episodes: int = 50
    eval_seed: int = 2000
    greedy: bool = False

    fault_mode: str = "none"
    fault_prob: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}; valid: {', '.join(ENVIRONMENTS)}")
        try:
            self.protocol = canonical_protocol(self.protocol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.update_mode not in ("summed", "sequential"):
            raise ConfigError("update_mode must be 'summed' or 'sequential'")
        if self.fault_mode not in ("none", "delay", "drop"):
            raise ConfigError("fault_mode must be one of none, delay, drop")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        self.hyperparams()
        self.agent_config()

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.gamma, self.alpha, self.beta, self.batch_size, self.horizon,
                           self.lr_actor, self.lr_critic)

    def agent_config(self) -> AgentConfig:
        try:
            return AgentConfig(self.protocol, self.hidden, self.message_encoder,
                               self.dial_action, self.passes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def env_kwargs(self) -> dict:
        if self.env.startswith("cacc"):
            kw = {"horizon": self.horizon, "comm_reach": self.comm_reach,
                  "collision_penalty": self.collision_penalty}
            if self.n_agents:
                kw["n_vehicles"] = self.n_agents
        else:
            kw = {"horizon": self.horizon, "q_max": self.chain_q_max,
                  "arrival": self.chain_arrival, "initial_queue": self.chain_initial_queue}
            if self.n_agents:
                kw["n_nodes"] = self.n_agents
        return kw

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # persistence

    def to_ini(self, path):
        cp = configparser.ConfigParser()
        for section, keys in SECTIONS.items():
            cp[section] = {k: _fmt(getattr(self, k)) for k in keys}
        with open(path, "w") as fh:
            cp.write(fh)

    @classmethod
    def from_ini(cls, path, **overrides) -> "RunConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path!r}")
        values = {}
        known = {f.name: f for f in fields(cls)}
        for section in cp.sections():
            for k, raw in cp[section].items():
                if k not in known:
                    raise ConfigError(f"unknown config key [{section}] {k}")
                values[k] = _parse(raw, known[k].type)
        env = overrides.get("env") or values.get("env", cls.env)
        return resolve(env, {**values, **overrides})


def resolve(env: str, overrides: dict | None = None) -> RunConfig:
    """Defaults for ``env`` (β, |B|, T per environment) updated by non-None overrides."""
    if env not in ENVIRONMENTS:
        raise ConfigError(f"unknown environment {env!r}; valid: {', '.join(ENVIRONMENTS)}")
    base = dict(ENV_DEFAULTS[env])
    base["env"] = env
    known = {f.name for f in fields(RunConfig)}
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in known:
            raise ConfigError(f"unknown config key {k!r}")
        base[k] = v
    return RunConfig(**base)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw, typ):
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    raw = raw.strip()
    if typ == "bool":
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"not a boolean: {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    return raw
