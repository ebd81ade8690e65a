import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmarl.envs import make_env
from nmarl.envs.cacc import (A_MAX, DT, V_MAX, CaccEnv, desired_velocity, ovm_accel,
                             slowdown_profile)
from nmarl.envs.chain import ChainEnv, ChainState, chain_step
from nmarl.errors import ConfigError


# CACC

def test_desired_velocity_knots():
    assert desired_velocity(5.0) == 0.0
    assert desired_velocity(35.0) == 30.0
    assert desired_velocity(20.0) == pytest.approx(15.0)
    assert desired_velocity(2.0) == 0.0 and desired_velocity(80.0) == 30.0
    h = np.linspace(0, 50, 501)
    assert (np.diff(desired_velocity(h)) >= 0).all()


def test_ovm_acceleration_is_clamped():
    assert ovm_accel(20.0, 15.0, 15.0, (0.5, 0.5)) == 0.0
    assert ovm_accel(20.0, 10.0, 15.0, (0.5, 0.0)) == 2.5
    assert ovm_accel(20.0, 14.0, 15.0, (0.0, 0.5)) == 0.5
    assert ovm_accel(35.0, 0.0, 30.0, (0.5, 0.5)) == A_MAX
    assert ovm_accel(5.5, 30.0, 0.0, (0.5, 0.5)) == -A_MAX
    with pytest.raises(ValueError):
        ovm_accel(0.0, 1.0, 1.0, (0.5, 0.5))


def test_equilibrium_holds_with_zero_cost():
    env = CaccEnv(horizon=600)
    st = env.reset_catchup(0, scale=1.0)
    for _ in range(600):
        st, r = env.transition(st, np.full(8, 3))
        assert np.array_equal(r, np.zeros(8))
    assert np.array_equal(st.h, np.full(8, 20.0)) and np.array_equal(st.v, np.full(8, 15.0))


def test_catchup_and_slowdown_initial_states():
    env = CaccEnv()
    st = env.reset_catchup(0, scale=3.5)
    assert st.h[0] == 70.0 and (st.h[1:] == 20.0).all() and (st.v == 15.0).all()
    for seed in range(20):
        a = env.reset_catchup(seed).h[0] / 20.0
        assert 3.0 <= a <= 4.0
    st = CaccEnv("slowdown").reset_slowdown(0, scale=2.0)
    assert (st.v == 30.0).all() and st.v_profile[0] == 30.0
    st = CaccEnv("slowdown").reset_slowdown(0, scale=1.6)
    assert (st.v == 24.0).all()
    st = CaccEnv("slowdown").reset_slowdown(0, scale=2.4)
    assert (st.v == 30.0).all() and st.v_profile[0] == 36.0
    prof = slowdown_profile(30.0, 600)
    assert prof[0] == 30.0 and prof[300] == 15.0 and prof[600] == 15.0
    assert prof[150] == pytest.approx(22.5)


def test_euler_step_by_hand():
    env = CaccEnv(horizon=10)
    st = env.reset_catchup(0, scale=3.0)      # h0 = 60, lead target 15
    nxt, r = env.transition(st, [1, 0, 0, 0, 0, 0, 0, 0])
    # vehicle 0: alpha = 0.5, v°(60) = 30 -> u = 0.5 * 15 = 7.5 -> clamped 2.5
    assert nxt.u[0] == 2.5
    assert nxt.v[0] == pytest.approx(15.0 + 2.5 * DT)
    assert nxt.h[0] == 60.0           # both vehicles moved at 15 during the step
    assert nxt.h[1] == 20.0
    expected0 = -((60 - 20) ** 2 + (15.25 - 15) ** 2 + 0.1 * 2.5 ** 2)
    assert r[0] == pytest.approx(expected0)


def test_training_shaping_penalty():
    env = CaccEnv(horizon=10, train_mode=True)
    st = env.reset_catchup(0, scale=1.0)
    st.h[3] = 8.2
    st.v[3] = 15.0
    st.v[2] = 13.0      # the front vehicle is slower: gap closes by 0.2 m
    nxt, r = env.transition(st, np.zeros(8, int))
    assert nxt.h[3] == pytest.approx(8.0)
    plain = -((8.0 - 20) ** 2 + (nxt.v[3] - 15.0) ** 2 + 0.1 * nxt.u[3] ** 2)
    # shaping term 5 * (10 - 8)^2 = 20
    assert r[3] == pytest.approx(plain - 20.0)
    env_eval = CaccEnv(horizon=10)
    _, r_eval = env_eval.transition(st, np.zeros(8, int))
    assert r_eval[3] == pytest.approx(plain)


def test_collision_penalty_then_absorbing():
    env = CaccEnv(horizon=20)
    st = env.reset_catchup(0, scale=1.0)
    st.h[4] = 1.05
    st.v[4] = 20.0
    st, r = env.transition(st, np.zeros(8, int))
    assert st.collided and (r == -1000.0).all()
    for _ in range(3):
        st, r = env.transition(st, np.zeros(8, int))
        assert (r == 0.0).all()


def test_step_interface_ends_on_collision():
    env = CaccEnv(horizon=20)
    env.reset(seed=0)
    env.state.h[2] = 1.01
    env.state.v[2] = 25.0
    obs, r, done, info = env.step(np.zeros(8, int))
    assert done and info["collided"] and len(obs) == 8


def test_observations_are_normalized_deviations():
    env = CaccEnv()
    env.reset_catchup(0, scale=1.0)
    assert all(np.array_equal(o, np.zeros(3)) for o in env.observations())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["catchup", "slowdown"]))
def test_random_actions_respect_limits(seed, scenario):
    env = CaccEnv(scenario, horizon=100)
    rng = np.random.default_rng(seed)
    env.reset(seed=seed)
    done = False
    while not done:
        _, _, done, _ = env.step(rng.integers(0, 4, size=8))
        s = env.state
        assert (s.v >= 0).all() and (s.v <= V_MAX).all()
        assert (np.abs(s.u) <= A_MAX).all()
        assert (np.abs(s.a) <= A_MAX + 1e-9).all()


def test_cacc_graph_and_factory():
    g = CaccEnv().graph()
    assert g.neighbors(0) == (1, 2) and g.neighbors(4) == (2, 3, 5, 6)
    assert make_env("cacc_slowdown").scenario == "slowdown"
    with pytest.raises(ConfigError, match="valid"):
        make_env("atsc_grid")
    with pytest.raises(ValueError):
        CaccEnv(horizon=1).transition(CaccEnv(horizon=1).reset_catchup(0, 1.0), np.zeros(3))


# chain

def test_chain_example():
    st = ChainState(np.array([3, 0]), arrival=0)
    nxt, r, info = chain_step(st, [2, 0], q_max=10)
    assert list(nxt.q) == [1, 2] and list(r) == [-1.0, -2.0]
    assert info == {"arrivals": 0, "departures": 0}


def test_chain_room_and_arrivals():
    st = ChainState(np.array([10, 9, 4]), arrival=2)
    nxt, _, info = chain_step(st, [2, 2, 2], q_max=10)
    # node 0 may push 2 but node 1 only has room for 1; node 1 moves 2 to node 2
    assert list(nxt.q) == [10, 8, 4]
    assert info["departures"] == 2
    assert info["arrivals"] == 1


def test_chain_locality():
    # node i's next queue reads only q_{i-1}, q_i, q_{i+1}, a_{i-1}, a_i
    rng = np.random.default_rng(0)
    for _ in range(300):
        q = rng.integers(0, 11, size=5)
        a = rng.integers(0, 3, size=5)
        nxt, _, _ = chain_step(ChainState(q.copy(), 1), a)
        i = int(rng.integers(0, 5))
        q2, a2 = q.copy(), a.copy()
        for j in range(5):
            if abs(j - i) > 1:
                q2[j] = rng.integers(0, 11)
            if j not in (i - 1, i):
                a2[j] = rng.integers(0, 3)
        n2, _, _ = chain_step(ChainState(q2, 1), a2)
        assert n2.q[i] == nxt.q[i]


def test_chain_env_is_deterministic():
    env = ChainEnv()
    o1 = env.reset(seed=1)
    o2 = env.reset(seed=99)
    assert all(np.array_equal(a, b) for a, b in zip(o1, o2))
    steps = 0
    done = False
    while not done:
        _, _, done, _ = env.step([1] * 5)
        steps += 1
    assert steps == 64
    with pytest.raises(ValueError):
        env.step([1] * 5)
    with pytest.raises(ValueError):
        chain_step(ChainState(np.zeros(2, int), 1), [3, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 10), min_size=1, max_size=7), st.integers(0, 3), st.data())
def test_chain_conservation_and_bounds(q, arrival, data):
    q = np.array(q)
    a = data.draw(st.lists(st.integers(0, 2), min_size=len(q), max_size=len(q)))
    nxt, r, info = chain_step(ChainState(q.copy(), arrival), a, 10)
    assert nxt.q.sum() == q.sum() + info["arrivals"] - info["departures"]
    assert (nxt.q >= 0).all() and (nxt.q <= 10).all()
    assert np.array_equal(r, -nxt.q.astype(float))
