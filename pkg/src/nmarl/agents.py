"""Recurrent actor-critic agents with neighborhood communication.

Each agent owns parameters under ``agent{i}/`` in a shared :class:`ParamStore`:

* ``enc_s``   observation encoder over s_i (IA2C, ConseNet, FPrint) or s_{V_i}
* ``enc_p``   fingerprint encoder over neighbor policies pi_{N_i, t-1}
* ``msg``     sender-side message encoder f_lambda(h_{i, t-1}) (NeurComm, DIAL)
* ``enc_h``   receiver-side encoder of neighbor messages
* ``enc_a``   DIAL projection of the agent's own previous action
* ``lstm``    belief update g_nu (``lstm_p2``, ``lstm_p3``, ... for extra passes)
* ``actor`` / ``critic`` heads

Neighbor quantities are always ordered by ascending agent index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcomp as dc
from .graph import AgentGraph

PROTOCOLS = ("ia2c", "consenet", "fprint", "dial", "commnet", "neurcomm")
COMMUNICATIVE = ("dial", "commnet", "neurcomm")

_ALIASES = {"ia2c": "ia2c", "consenet": "consenet", "ia2c_cu": "consenet", "fprint": "fprint",
            "ia2c_fp": "fprint", "dial": "dial", "commnet": "commnet", "cnet": "commnet",
            "neurcomm": "neurcomm", "nc": "neurcomm"}


def canonical_protocol(name: str) -> str:
    key = name.strip().lower()
    if key not in _ALIASES:
        raise ValueError(f"unknown protocol {name!r}; valid: {', '.join(PROTOCOLS)}")
    return _ALIASES[key]


def message_size(protocol: str, obs_dim: int, n_actions: int, hidden: int = 64) -> int:
    """Scalars one agent broadcasts per step under ``protocol``."""
    protocol = canonical_protocol(protocol)
    return {"neurcomm": obs_dim + n_actions + hidden,
            "dial": obs_dim + n_actions + hidden,
            "commnet": obs_dim + hidden,
            "fprint": n_actions,
            "ia2c": 0, "consenet": 0}[protocol]


@dataclass
class AgentConfig:
    protocol: str = "neurcomm"
    hidden: int = 64
    # "sender": m_i = relu(fc(h_i)); "identity": m_i = h_i (receiver encoder only)
    message_encoder: str = "sender"
    # DIAL: add the projected previous action as a separate summand, or inside the
    # relu of the message term
    dial_action: str = "summand"
    passes: int = 1

    def __post_init__(self):
        self.protocol = canonical_protocol(self.protocol)
        if self.message_encoder not in ("sender", "identity"):
            raise ValueError(f"message_encoder must be 'sender' or 'identity', "
                             f"got {self.message_encoder!r}")
        if self.dial_action not in ("summand", "inside"):
            raise ValueError("dial_action must be 'summand' or 'inside'")
        if self.passes < 1:
            raise ValueError(f"pass count must be >= 1, got {self.passes}")


class AgentPolicy:
    """Belief update, actor head and critic head of one agent."""

    def __init__(self, index: int, graph: AgentGraph, cfg: AgentConfig, store: dc.ParamStore,
                 rng: np.random.Generator):
        self.index = index
        self.graph = graph
        self.cfg = cfg
        self.protocol = cfg.protocol
        self.store = store
        self.prefix = f"agent{index}/"
        self.neighbors = graph.neighbors(index)
        self.closed = graph.closed_neighborhood(index)
        self.n_actions = graph.action_sizes[index]
        self.obs_dim = graph.obs_dims[index]
        self.hidden = cfg.hidden
        self._build(rng)

    def p(self, name):
        return self.store[self.prefix + name]

    def _dense(self, name, x):
        return dc.fc(x, self.store[f"{self.prefix}{name}/W"], self.store[f"{self.prefix}{name}/b"])

    @property
    def uses_closed_obs(self):
        return self.protocol in COMMUNICATIVE

    @property
    def sends_encoded_message(self):
        return self.protocol in ("neurcomm", "dial") and self.cfg.message_encoder == "sender"

    def _build(self, rng):
        H, g, s, pre = self.hidden, self.graph, self.store, self.prefix
        nb = self.neighbors
        obs_in = sum(g.obs_dims[j] for j in self.closed) if self.uses_closed_obs else self.obs_dim
        pi_in = sum(g.action_sizes[j] for j in nb)
        dc.add_fc(s, rng, pre + "enc_s", obs_in, H)
        lstm_in = H
        proto = self.protocol
        if proto in ("fprint", "neurcomm") and nb:
            dc.add_fc(s, rng, pre + "enc_p", pi_in, H)
            lstm_in += H
        if self.sends_encoded_message:
            dc.add_fc(s, rng, pre + "msg", H, H)
        if proto in ("neurcomm", "dial") and nb:
            dc.add_fc(s, rng, pre + "enc_h", H * len(nb), H)
            if proto == "neurcomm":
                lstm_in += H
        if proto == "dial":
            dc.add_fc(s, rng, pre + "enc_a", self.n_actions, H)
        if proto == "commnet" and nb:
            dc.add_fc(s, rng, pre + "enc_h", H, H)
        for k in range(self.cfg.passes):
            dc.add_lstm(s, rng, pre + _lstm_name(k), lstm_in, H)
        dc.add_fc(s, rng, pre + "actor", H, self.n_actions, scale=0.1)
        dc.add_fc(s, rng, pre + "critic", H + sum(g.action_sizes[j] for j in nb), 1)

    # forward pieces

    def initial_state(self):
        z = np.zeros(self.hidden)
        return dc.Tensor(z), dc.Tensor(z.copy())

    def message(self, h):
        """Hidden-state message m_i broadcast to neighbors (prior-decision)."""
        if self.sends_encoded_message:
            return dc.relu(self._dense("msg", h))
        return h

    def update_belief(self, h, c, s_closed, pi_nbr, m_nbr, a_prev=None, pass_index=0):
        """One application of the protocol's belief update.

        ``s_closed``: observations of V_i (ascending) for communicative protocols,
        otherwise just s_i; ``pi_nbr``/``m_nbr``: per-neighbor previous policies and
        messages; ``a_prev``: own previous action (DIAL, None at episode start).
        Returns ``(h, c)``.
        """
        nb = self.neighbors
        if len(pi_nbr) != len(nb) or len(m_nbr) != len(nb):
            raise ValueError(f"agent {self.index} expects {len(nb)} neighbor inputs, got "
                             f"{len(pi_nbr)} policies / {len(m_nbr)} messages")
        s_in = s_closed if isinstance(s_closed, dc.Tensor) else np.concatenate(
            [np.asarray(x, dtype=float).reshape(-1) for x in s_closed])
        proto = self.protocol
        if proto == "commnet":
            x = dc.tanh(self._dense("enc_s", s_in))
        else:
            x = dc.relu(self._dense("enc_s", s_in))
        if proto in ("fprint", "neurcomm") and nb:
            pis = np.concatenate([np.asarray(q, dtype=float) for q in pi_nbr])
            x_p = dc.relu(self._dense("enc_p", pis))
        if proto == "neurcomm":
            parts = [x]
            if nb:
                parts.append(x_p)
                parts.append(dc.relu(self._dense("enc_h", dc.concat(m_nbr))))
            x = dc.concat(parts)
        elif proto == "fprint":
            if nb:
                x = dc.concat([x, x_p])
        elif proto == "dial":
            a_vec = np.zeros(self.n_actions)
            if a_prev is not None:
                a_vec[a_prev] = 1.0
            a_term = self._dense("enc_a", a_vec)
            if nb:
                pre_h = self._dense("enc_h", dc.concat(m_nbr))
                if self.cfg.dial_action == "inside":
                    x = x + dc.relu(pre_h + a_term)
                else:
                    x = x + dc.relu(pre_h) + a_term
            else:
                x = x + a_term
        elif proto == "commnet":
            if nb:
                x = x + self._dense("enc_h", dc.mean(m_nbr))
        name = self.prefix + _lstm_name(pass_index)
        return dc.lstm_cell(self.store, name, h, c, x)

    def logits(self, h):
        return self._dense("actor", h)

    def act(self, h, rng=None, greedy=False):
        """Return ``(pi, action)``; greedy picks the lowest-index argmax."""
        pi = _softmax(self.logits(h).value)
        return pi, sample_action(pi, rng, greedy)

    def value(self, h, a_nbr):
        """V(h_i, onehot(a_{N_i})) as a scalar tensor."""
        nb = self.neighbors
        if len(a_nbr) != len(nb):
            raise ValueError(f"agent {self.index} has {len(nb)} neighbors, got {len(a_nbr)} actions")
        if not nb:
            x = h
        else:
            blocks = []
            for j, a in zip(nb, a_nbr):
                v = np.zeros(self.graph.action_sizes[j])
                if isinstance(a, (int, np.integer)):
                    v[a] = 1.0
                else:  # probability vector: expected one-hot
                    v[:] = a
                blocks.append(v)
            x = dc.concat([h, np.concatenate(blocks)])
        return dc.pick(self._dense("critic", x), 0)

    def param_names(self, group=None):
        names = self.store.names(self.prefix)
        if group is None:
            return names
        return [n for n in names if n[len(self.prefix):].split("/")[0] in _GROUPS[group]]


_GROUPS = {
    "encoder": ("enc_s", "enc_p", "msg", "enc_h", "enc_a"),
    "message": ("msg",),
    "actor": ("actor",),
    "critic": ("critic",),
}


def _lstm_name(k):
    return "lstm" if k == 0 else f"lstm_p{k + 1}"


def _softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def sample_action(pi, rng=None, greedy=False):
    if greedy or rng is None:
        return int(np.argmax(pi))
    cdf = np.cumsum(pi)
    a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(a, len(pi) - 1)


@dataclass
class StepResult:
    """Per-agent outputs of one synchronous forward step."""
    h: list
    c: list
    pi: list            # numpy probability vectors
    actions: list
    logp: list          # log_softmax tensors (for the actor loss)
    values: list        # scalar tensors
    messages: list = field(default_factory=list)


class MultiAgentSystem:
    """All agents of one graph plus the synchronous message/belief/value phases."""

    def __init__(self, graph: AgentGraph, cfg: AgentConfig | None = None, seed_or_rng=0,
                 store: dc.ParamStore | None = None):
        self.graph = graph
        self.cfg = cfg or AgentConfig()
        rng = (seed_or_rng if isinstance(seed_or_rng, np.random.Generator)
               else np.random.default_rng(seed_or_rng))
        self.store = store if store is not None else dc.ParamStore()
        self.agents = [AgentPolicy(i, graph, self.cfg, self.store, rng)
                       for i in range(graph.n_agents)]

    @property
    def n_agents(self):
        return self.graph.n_agents

    def initial_state(self):
        hs, cs = zip(*(a.initial_state() for a in self.agents))
        pis = [np.zeros(a.n_actions) for a in self.agents]
        return SystemState(list(hs), list(cs), pis, [None] * self.n_agents)

    def observe_inputs(self, i, obs):
        ag = self.agents[i]
        if ag.uses_closed_obs:
            return np.concatenate([obs[j] for j in ag.closed])
        return np.asarray(obs[i], dtype=float)

    def beliefs(self, obs, state, passes=None):
        """Message and belief phases; returns ``(h, c, messages_first_pass)``."""
        k = self.cfg.passes if passes is None else passes
        if k < 1:
            raise ValueError(f"pass count must be >= 1, got {k}")
        if k > self.cfg.passes:
            raise ValueError(f"system was built for {self.cfg.passes} passes, asked for {k}")
        h, c = list(state.h), list(state.c)
        first_msgs = None
        for p in range(k):
            msgs = [ag.message(h[i]) for i, ag in enumerate(self.agents)]
            if first_msgs is None:
                first_msgs = msgs
            new_h, new_c = [], []
            for i, ag in enumerate(self.agents):
                nb = ag.neighbors
                hi, ci = ag.update_belief(
                    h[i], c[i], self.observe_inputs(i, obs),
                    [state.pi[j] for j in nb], [msgs[j] for j in nb],
                    state.a[i], pass_index=p)
                new_h.append(hi)
                new_c.append(ci)
            h, c = new_h, new_c
        return h, c, first_msgs

    def step(self, obs, state, rng=None, greedy=False, with_values=True):
        h, c, msgs = self.beliefs(obs, state)
        logps, pis, acts = [], [], []
        for i, ag in enumerate(self.agents):
            logits = ag.logits(h[i])
            lp = dc.log_softmax(logits)
            pi = _softmax(logits.value)
            logps.append(lp)
            pis.append(pi)
            acts.append(sample_action(pi, rng, greedy))
        values = []
        if with_values:
            for i, ag in enumerate(self.agents):
                values.append(ag.value(h[i], [acts[j] for j in ag.neighbors]))
        return StepResult(h, c, pis, acts, logps, values, msgs)

    def next_state(self, res: StepResult, detach=False):
        h, c = res.h, res.c
        if detach:
            h = [dc.Tensor(x.value.copy()) for x in h]
            c = [dc.Tensor(x.value.copy()) for x in c]
        return SystemState(list(h), list(c), [p.copy() for p in res.pi], list(res.actions))


@dataclass
class SystemState:
    h: list
    c: list
    pi: list
    a: list

    def detach(self):
        return SystemState([dc.Tensor(x.value.copy()) for x in self.h],
                           [dc.Tensor(x.value.copy()) for x in self.c],
                           [p.copy() for p in self.pi], list(self.a))
