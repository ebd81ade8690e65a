"""
Lossy links at execution time
=============================

The deployed agents talk over links that may deliver a packet one step
late or not at all; a receiver then keeps whatever it got last. Here an
untrained communicating policy is run with growing drop and delay rates to
show that execution stays well defined and how much the return moves.
"""

from nmarl.agents import AgentConfig, MultiAgentSystem
from nmarl.envs import ChainEnv
from nmarl.executor import CommFaults, execute

env = ChainEnv()
system = MultiAgentSystem(env.graph(), AgentConfig("neurcomm"), 0)

for mode in ("drop", "delay"):
    for p in (0.0, 0.25, 0.5, 1.0):
        res = execute(system, env, episodes=10, greedy=True, comm_faults=CommFaults(mode, p, 0))
        print(f"{mode:5s} p={p:<4g} mean return {res.mean_return:8.3f}")
