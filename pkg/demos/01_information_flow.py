"""
How far does a nudge travel?
============================

Eight agents sit on a line. We perturb the first observation of agent 0
and watch when each agent's hidden state starts to differ. Agents that
exchange learned messages hear about it one hop per step; independent
learners never hear about it at all.
"""

import numpy as np

from nmarl import diffcomp as dc
from nmarl.agents import AgentConfig, MultiAgentSystem
from nmarl.graph import AgentGraph

n, T = 8, 9
g = AgentGraph.chain(n, obs_dims=3, action_sizes=4)
rng = np.random.default_rng(0)
obs = [[rng.normal(size=3) for _ in range(n)] for _ in range(T)]


def trace(system, obs_seq):
    st = system.initial_state()
    out = []
    with dc.no_grad():
        for o in obs_seq:
            res = system.step(o, st, greedy=True)
            out.append([h.value.copy() for h in res.h])
            st = system.next_state(res)
    return out


pert = [[x.copy() for x in step] for step in obs]
pert[0][0] = pert[0][0] + 1.0

for proto in ("ia2c", "fprint", "neurcomm"):
    system = MultiAgentSystem(g, AgentConfig(proto), 1)
    a, b = trace(system, obs), trace(system, pert)
    first = []
    for i in range(n):
        t_hit = next((t for t in range(T) if not np.array_equal(a[t][i], b[t][i])), None)
        first.append("-" if t_hit is None else str(t_hit))
    print(f"{proto:9s} first step each agent notices: {' '.join(first)}")

# neurcomm: agent i notices at step i - 1 (messages carry last step's belief,
# observations of direct neighbors arrive immediately).
# fprint: one step later, since only neighbor policies travel.
# ia2c: each belief reads only the agent's own observation, so nobody else
# ever notices.
