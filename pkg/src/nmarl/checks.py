"""Self-checks shared by the command line and the test-suite.

``protocol_gradcheck`` unrolls a small communicating system for a few steps,
builds the summed actor/critic loss and compares reverse-mode gradients with
central differences. ``property_checks`` runs randomized invariants of the
environments and the return computation against brute-force references.
"""
from __future__ import annotations

import numpy as np

from . import diffcomp as dc
from .agents import AgentConfig, MultiAgentSystem
from .envs.cacc import A_MAX, V_MAX, CaccEnv
from .envs.chain import ChainState, chain_step
from .graph import AgentGraph
from .learning import actor_loss, critic_loss, spatial_returns


def unrolled_loss(system: MultiAgentSystem, obs_seq, actions, rewards, gamma=0.99, alpha=0.9,
                  beta=0.01, bootstrap=None):
    """Summed actor + critic loss of a fixed-action unroll; returns a closure.

    Actions are given, so the computation is a smooth function of the
    parameters (sampling would make finite differences meaningless).
    """
    n, T = system.n_agents, len(obs_seq)
    bootstrap = np.zeros(n) if bootstrap is None else bootstrap
    rets = spatial_returns(rewards, system.graph, gamma, alpha, bootstrap)
    frozen = {}

    def f():
        state = system.initial_state()
        logps, vals = [], []
        for t in range(T):
            h, c, _ = system.beliefs(obs_seq[t], state)
            lps = [dc.log_softmax(ag.logits(h[i])) for i, ag in enumerate(system.agents)]
            # previous policies enter the next step as data, as in training
            pis = frozen.setdefault(("pi", t), [np.exp(lp.value) for lp in lps])
            vs = [ag.value(h[i], [actions[t][j] for j in ag.neighbors])
                  for i, ag in enumerate(system.agents)]
            logps.append(lps)
            vals.append(vs)
            state = type(state)(h, c, pis, list(actions[t]))
        if "adv" not in frozen:
            # the advantage is a constant of the loss; freeze it at the first
            # evaluation so finite differences see the same function
            frozen["adv"] = rets - np.array([[v.value.item() for v in row] for row in vals])
        adv = frozen["adv"]
        terms = []
        for i in range(n):
            terms.append(actor_loss([lp[i] for lp in logps], [a[i] for a in actions],
                                    adv[:, i], beta))
            terms.append(critic_loss([v[i] for v in vals], rets[:, i]))
        return dc.lincomb(terms, [1.0] * len(terms))

    return f


def protocol_gradcheck(protocol, n_agents=3, steps=4, seed=0, hidden=64, max_per_tensor=8,
                       passes=1, return_details=False):
    """Max relative gradient error of a ``steps``-step unroll on an ``n_agents`` chain."""
    rng = np.random.default_rng(seed)
    graph = AgentGraph.chain(n_agents, obs_dims=3, action_sizes=4)
    system = MultiAgentSystem(graph, AgentConfig(protocol, hidden, passes=passes), rng)
    # larger weights than the default init so that nonlinearities are exercised
    for _, p in system.store.items():
        p.value += rng.normal(0, 0.3, p.value.shape)
    obs = [[rng.normal(size=3) for _ in range(n_agents)] for _ in range(steps)]
    acts = rng.integers(0, 4, size=(steps, n_agents)).tolist()
    rewards = rng.normal(size=(steps, n_agents))
    f = unrolled_loss(system, obs, acts, rewards, bootstrap=rng.normal(size=n_agents))
    return dc.grad_check(f, dict(system.store.items()), eps=1e-3, stencil=4,
                         max_per_tensor=max_per_tensor, rng=rng,
                         return_details=return_details)


# randomized property checks

def _brute_returns(rewards, dist, gamma, alpha, bootstrap, dones):
    T, n = rewards.shape
    out = np.zeros((T, n))
    for i in range(n):
        for t in range(T):
            acc, disc = 0.0, 1.0
            end = None
            for s in range(t, T):
                acc += disc * sum(alpha ** dist[i, j] * rewards[s, j] for j in range(n))
                disc *= gamma
                if dones[s]:
                    end = s
                    break
            if end is None:
                acc += disc * bootstrap[i]
            out[t, i] = acc
    return out


def check_returns(trials=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        T = int(rng.integers(1, 11))
        g = _random_graph(n, rng)
        gamma, alpha = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
        r = rng.normal(size=(T, n))
        boot = rng.normal(size=n)
        dones = rng.random(T) < 0.2
        got = spatial_returns(r, g, gamma, alpha, boot, dones)
        ref = _brute_returns(r, g.distances, gamma, alpha, boot, dones)
        worst = max(worst, float(np.abs(got - ref).max()))
    return worst <= 1e-10, f"max abs deviation {worst:.2e}"


def _random_graph(n, rng):
    edges = [(int(rng.integers(0, k)), k) for k in range(1, n)]  # random spanning tree
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.2:
                edges.append((i, j))
    return AgentGraph(n, edges)


def check_chain(trials=300, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        qmax = int(rng.integers(1, 12))
        q = rng.integers(0, qmax + 1, size=n)
        st = ChainState(q.copy(), int(rng.integers(0, 3)))
        nxt, rew, info = chain_step(st, rng.integers(0, 3, size=n), qmax)
        if nxt.q.min() < 0 or nxt.q.max() > qmax:
            return False, f"queue left [0, {qmax}]: {nxt.q}"
        if nxt.q.sum() != q.sum() + info["arrivals"] - info["departures"]:
            return False, "queue mass not conserved"
        if not np.array_equal(rew, -nxt.q.astype(float)):
            return False, "reward is not the negative next queue"
    return True, f"{trials} random transitions"


def check_cacc(episodes=20, seed=0):
    rng = np.random.default_rng(seed)
    env = CaccEnv("catchup", horizon=200)
    for e in range(episodes):
        env.reset(seed=int(rng.integers(1 << 31)))
        done = False
        while not done:
            _, _, done, _ = env.step(rng.integers(0, 4, size=env.n_agents))
            st = env.state
            if st.v.min() < 0 or st.v.max() > V_MAX or np.abs(st.u).max() > A_MAX:
                return False, f"constraint violated at step {st.step}"
    return True, f"{episodes} random-action episodes within limits"


PROPERTIES = {"spatial returns": check_returns, "chain conservation": check_chain,
              "cacc constraints": check_cacc}


def property_checks(seed=0):
    """Returns ``{name: (ok, detail)}``."""
    return {name: fn(seed=seed) for name, fn in PROPERTIES.items()}
