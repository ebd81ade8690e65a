import json
import os

import numpy as np
import pytest

from nmarl import diffcomp as dc


def _store(seed=0):
    rng = np.random.default_rng(seed)
    s = dc.ParamStore()
    dc.add_fc(s, rng, "a/fc", 3, 2)
    dc.add_lstm(s, rng, "a/lstm", 2, 4)
    return s


def test_rmsprop_matches_closed_form_over_steps():
    s = dc.ParamStore()
    p = s.add("w", np.array([1.0, -2.0]))
    opt = dc.RMSprop(decay=0.99, eps=1e-5, clip=None)
    v = np.zeros(2)
    w = p.value.copy()
    rng = np.random.default_rng(0)
    for _ in range(5):
        g = rng.normal(size=2)
        p.grad = g.copy()
        opt.step(s, 0.01)
        v = 0.99 * v + 0.01 * g * g
        w = w - 0.01 * g / np.sqrt(v + 1e-5)
    assert np.allclose(p.value, w, rtol=0, atol=1e-15)


def test_clipping_halves_a_norm_80_gradient():
    s = dc.ParamStore()
    p = s.add("w", np.zeros(2))
    g = np.array([48.0, 64.0])      # norm 80
    p.grad = g.copy()
    opt = dc.RMSprop(clip=40.0)
    norm = opt.step(s, 1.0)
    assert norm == 80.0
    sq = s.opt_state["w"]["sq"]
    assert np.allclose(sq, 0.01 * (g / 2) ** 2)


def test_non_finite_gradient_raises():
    s = dc.ParamStore()
    p = s.add("w", np.zeros(2))
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(dc.TrainingError, match="'w'"):
        dc.RMSprop().step(s, 0.1)


def test_per_parameter_learning_rate():
    s = dc.ParamStore()
    a, b = s.add("x/actor/W", np.zeros(1)), s.add("x/critic/W", np.zeros(1))
    a.grad, b.grad = np.ones(1), np.ones(1)
    dc.RMSprop(clip=None).step(s, lambda n: 2.0 if "critic" in n else 1.0)
    assert b.value[0] == pytest.approx(2 * a.value[0])


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    s = _store()
    path = str(tmp_path / "ck")
    s.save(path, {"protocol": "ia2c"})
    t = _store(seed=5)
    meta = t.load(path)
    assert meta["protocol"] == "ia2c"
    for n in s:
        assert s[n].value.tobytes() == t[n].value.tobytes()
    manifest = json.load(open(os.path.join(path, "manifest.json")))
    assert manifest["dtype"] == "float64"


def test_checkpoint_errors(tmp_path):
    s = _store()
    path = str(tmp_path / "ck")
    s.save(path)
    bigger = _store()
    bigger.add("b/extra", np.zeros(3))
    with pytest.raises(dc.CheckpointError, match="missing"):
        bigger.load(path)
    with pytest.raises(dc.CheckpointError):
        dc.ParamStore.read(str(tmp_path / "nothing"))
    with pytest.raises(KeyError):
        s.add("a/fc/W", np.zeros(1))


def test_initializers():
    rng = np.random.default_rng(0)
    q = dc.orthogonal(rng, 6, 6)
    assert np.allclose(q @ q.T, np.eye(6), atol=1e-12)
    w = dc.scaled_uniform(rng, 200, 50, scale=1.0)
    assert np.abs(w).max() <= np.sqrt(3 / 50)
    s = _store()
    assert s["a/lstm/Wx"].value.shape == (16, 2)
    assert s["a/lstm/Wh"].value.shape == (16, 4)
    assert not s["a/fc/b"].value.any()
    # each recurrent gate block is orthogonal
    Wh = s["a/lstm/Wh"].value
    for k in range(4):
        blk = Wh[4 * k:4 * k + 4]
        assert np.allclose(blk @ blk.T, np.eye(4), atol=1e-12)


def test_zero_grad():
    s = _store()
    for n in s:
        s[n].grad = np.ones_like(s[n].value)
    s.zero_grad()
    assert all(s[n].grad is None or not s[n].grad.any() for n in s)
