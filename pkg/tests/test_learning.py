import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmarl import diffcomp as dc
from nmarl.agents import AgentConfig, MultiAgentSystem
from nmarl.errors import ConfigError
from nmarl.graph import AgentGraph
from nmarl.learning import (STATS, Hyperparams, RolloutBuffer, actor_loss, consensus_update,
                            critic_loss, spatial_returns)
from oracles import brute_force_returns


@st.composite
def return_cases(draw):
    n = draw(st.integers(1, 6))
    T = draw(st.integers(1, 10))
    edges = [(draw(st.integers(0, k - 1)), k) for k in range(1, n)]
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    gamma = draw(st.floats(0.5, 1.0))
    alpha = draw(st.floats(0.0, 1.0))
    return (AgentGraph(n, edges), rng.normal(size=(T, n)), gamma, alpha,
            rng.normal(size=n), rng.random(T) < 0.25)


@settings(max_examples=200, deadline=None)
@given(return_cases())
def test_spatial_returns_match_double_sum(case):
    g, r, gamma, alpha, boot, dones = case
    got = spatial_returns(r, g, gamma, alpha, boot, dones)
    ref = brute_force_returns(r, g.distances, gamma, alpha, boot, dones)
    assert np.abs(got - ref).max() <= 1e-10


def test_alpha_one_gives_the_global_return_for_every_agent():
    g = AgentGraph.chain(4)
    rng = np.random.default_rng(0)
    r = rng.normal(size=(6, 4))
    boot = np.full(4, 0.7)
    got = spatial_returns(r, g, 0.9, 1.0, boot)
    ref = np.zeros(6)
    run = 0.7
    for t in range(5, -1, -1):
        run = r[t].sum() + 0.9 * run
        ref[t] = run
    for i in range(4):
        assert np.array_equal(got[:, i], ref)


def test_alpha_zero_is_independent_learning():
    g = AgentGraph.chain(3)
    r = np.array([[1.0, 10.0, 100.0]])
    assert np.array_equal(spatial_returns(r, g, 0.5, 0.0, np.zeros(3))[0], [1, 10, 100])


def test_returns_errors():
    g = AgentGraph.chain(2)
    with pytest.raises(ValueError):
        spatial_returns(np.zeros((2, 2)), g, 0.9, 1.0)
    with pytest.raises(ValueError):
        spatial_returns(np.zeros((2, 2)), g, 0.9, 1.0, np.zeros(3))


def test_buffer_round_trip():
    buf = RolloutBuffer(2)
    buf.add([np.zeros(1)] * 2, [np.zeros(3)] * 2, [0, 1], [1.0, 2.0], [0.5, 0.5], False)
    buf.add([np.zeros(1)] * 2, [np.zeros(3)] * 2, [1, 1], [0.0, 1.0], [0.1, 0.2], True)
    buf.bootstrap = np.array([3.0, 4.0])
    g = AgentGraph.chain(2)
    R = spatial_returns(buf, g, 0.5, 1.0)
    assert np.allclose(R, [[3.0 + 0.5 * 1.0, 3.0 + 0.5 * 1.0], [1.0, 1.0]])
    buf.clear()
    assert len(buf) == 0 and buf.bootstrap is None
    with pytest.raises(ValueError):
        buf.add([np.zeros(1)] * 2, [], [0], [0.0, 0.0], [0.0, 0.0], False)


def test_actor_loss_two_action_example():
    z = dc.parameter(np.array([0.0, np.log(3.0)]))          # pi = (0.25, 0.75)
    tape = dc.Tape()
    with tape:
        loss = actor_loss([dc.log_softmax(z)], [1], [2.0], beta=0.1)
    neg_h = 0.25 * np.log(0.25) + 0.75 * np.log(0.75)
    assert loss.value == pytest.approx(-2.0 * np.log(0.75) + 0.1 * neg_h, abs=1e-14)
    dc.backward(loss, tape)
    # d(-A log pi_a)/dz = -A (e_a - pi); d(sum p log p)/dz_k = p_k (log p_k - sum p log p)
    pi = np.array([0.25, 0.75])
    expected = -2.0 * (np.array([0.0, 1.0]) - pi) + 0.1 * pi * (np.log(pi) - neg_h)
    assert np.allclose(z.grad, expected, atol=1e-14)


def test_actor_loss_averages_and_clamps():
    lp_ok = dc.log_softmax(dc.parameter(np.array([0.0, 0.0])))
    lp_tiny = dc.log_softmax(dc.parameter(np.array([0.0, -50.0])))
    before = STATS.log_clamps
    loss = actor_loss([lp_ok, lp_tiny], [0, 1], [1.0, 1.0], beta=0.0)
    assert STATS.log_clamps == before + 1
    assert loss.value == pytest.approx((np.log(2) + 30.0) / 2)
    with pytest.raises(ValueError):
        actor_loss([], [], [], 0.0)


def test_critic_loss_is_mean_squared_error():
    v = [dc.parameter(np.array(1.0)), dc.parameter(np.array(-1.0))]
    tape = dc.Tape()
    with tape:
        loss = critic_loss(v, [2.0, 1.0])
    assert loss.value == pytest.approx((1.0 + 4.0) / 2)
    dc.backward(loss, tape)
    assert v[0].grad == pytest.approx(-1.0) and v[1].grad == pytest.approx(-2.0)


def test_consensus_example():
    g = AgentGraph.chain(3)
    s = MultiAgentSystem(g, AgentConfig("consenet", 4), 0)
    for i, val in enumerate((0.0, 3.0, 6.0)):
        for n in s.store.names(f"agent{i}/lstm"):
            s.store[n].value[...] = val
    consensus_update(s.store, g)
    for i, val in enumerate((1.5, 3.0, 4.5)):
        for n in s.store.names(f"agent{i}/lstm"):
            assert (s.store[n].value == val).all()
    # other layers untouched
    assert s.store["agent0/actor/W"].value.any()


def test_consensus_rejects_heterogeneous_layers():
    g = AgentGraph.chain(2)
    store = dc.ParamStore()
    store.add("agent0/lstm/Wx", np.zeros((8, 3)))
    store.add("agent1/lstm/Wx", np.zeros((8, 5)))
    with pytest.raises(ConfigError, match="heterogeneous"):
        consensus_update(store, g)
    store.add("agent1/lstm/b", np.zeros(8))
    with pytest.raises(ConfigError, match="different"):
        consensus_update(store, g)


def test_hyperparameter_validation():
    for bad in ({"gamma": 0.0}, {"alpha": 1.5}, {"batch_size": 0}, {"lr_actor": -1.0}):
        with pytest.raises(ConfigError):
            Hyperparams(**bad)
