import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmarl import diffcomp as dc


def numeric_grad(f, x, eps=1e-3):
    """Fourth-order central differences."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        vals = []
        for k in (1, -1, 2, -2):
            x[i] = old + k * eps
            vals.append(f())
        x[i] = old
        g[i] = (8 * (vals[0] - vals[1]) - (vals[2] - vals[3])) / (12 * eps)
    return g


def check_op(build, shapes, rng, tol=1e-6):
    params = [dc.parameter(rng.normal(size=s)) for s in shapes]
    weights = rng.normal(size=build(*params).value.shape)

    def scalar():
        return float(np.sum(build(*params).value * weights))

    tape = dc.Tape()
    with tape:
        out = build(*params)
        loss = dc.total(dc.mul(out, weights)) if out.value.shape else dc.mul(out, float(weights))
    dc.backward(loss, tape)
    for p in params:
        num = numeric_grad(scalar, p.value)
        err = dc.relative_error(p.grad, num).max()
        assert err < tol, err


OPS = {
    "add": (lambda a, b: dc.add(a, b), [(4,), (4,)]),
    "sub": (lambda a, b: a - b, [(4,), (4,)]),
    "mul": (lambda a, b: dc.mul(a, b), [(5,), (5,)]),
    "square": (lambda a: dc.square(a), [(3,)]),
    "exp": (lambda a: dc.exp(a), [(3,)]),
    "tanh": (lambda a: dc.tanh(a), [(6,)]),
    "sigmoid": (lambda a: dc.sigmoid(a), [(6,)]),
    "softmax": (lambda a: dc.softmax(a), [(5,)]),
    "log_softmax": (lambda a: dc.log_softmax(a), [(5,)]),
    "neg_entropy": (lambda a: dc.neg_entropy(dc.log_softmax(a)), [(4,)]),
    "concat": (lambda a, b: dc.concat([a, b]), [(2,), (3,)]),
    "slice": (lambda a: dc.slice_(a, 1, 4), [(6,)]),
    "pick": (lambda a: dc.pick(a, 2), [(4,)]),
    "mean": (lambda a, b: dc.mean([a, b]), [(3,), (3,)]),
    "lincomb": (lambda a, b: dc.lincomb([a, b], [0.3, -2.0]), [(3,), (3,)]),
    "fc": (lambda x, W, b: dc.fc(x, W, b), [(4,), (3, 4), (3,)]),
    "lstm": (lambda x, h, c, Wx, Wh, b: dc.lstm(x, h, c, Wx, Wh, b),
             [(3,), (2,), (2,), (8, 3), (8, 2), (8,)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_over_seeds(name):
    build, shapes = OPS[name]
    for seed in range(100):
        check_op(build, shapes, np.random.default_rng(seed))


def test_log_gradient_on_positive_inputs():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        check_op(lambda a: dc.log(a), [(3,)], _Positive(rng))


class _Positive:
    def __init__(self, rng):
        self.rng = rng

    def normal(self, size):
        return np.abs(self.rng.normal(size=size)) + 0.5


def test_relu_gradient_away_from_kink():
    x = dc.parameter(np.array([-1.0, 0.5, 2.0]))
    tape = dc.Tape()
    with tape:
        y = dc.total(dc.relu(x))
    dc.backward(y, tape)
    assert np.array_equal(x.grad, [0.0, 1.0, 1.0])


def test_gradient_accumulates_over_shared_use():
    x = dc.parameter(np.array([3.0]))
    tape = dc.Tape()
    with tape:
        y = dc.total(x * x + x)
    dc.backward(y, tape)
    assert x.grad[0] == 7.0


def test_no_grad_records_nothing():
    x = dc.parameter(np.ones(3))
    tape = dc.Tape()
    with tape:
        with dc.no_grad():
            dc.tanh(x)
    assert len(tape) == 0


def test_backward_resets_previous_gradients():
    x = dc.parameter(np.array([2.0]))
    for _ in range(2):
        tape = dc.Tape()
        with tape:
            y = dc.total(dc.square(x))
        dc.backward(y, tape)
    assert x.grad[0] == 4.0


def test_errors():
    with pytest.raises(ValueError):
        dc.fc(dc.Tensor(np.ones(3)), dc.parameter(np.ones((2, 4))), dc.parameter(np.ones(2)))
    with pytest.raises(ValueError):
        dc.mean([])
    with pytest.raises(FloatingPointError):
        z = np.zeros(2)
        dc.lstm(dc.Tensor(np.array([np.inf])), dc.Tensor(z), dc.Tensor(z),
                dc.parameter(np.ones((8, 1))), dc.parameter(np.ones((8, 2))),
                dc.parameter(np.zeros(8)))


def test_lstm_matches_reference_formula():
    rng = np.random.default_rng(0)
    x, h, c = rng.normal(size=3), rng.normal(size=2), rng.normal(size=2)
    Wx, Wh, b = rng.normal(size=(8, 3)), rng.normal(size=(8, 2)), rng.normal(size=8)
    z = Wx @ x + Wh @ h + b
    sig = lambda v: 1 / (1 + np.exp(-v))
    i, f, o, g = sig(z[0:2]), sig(z[2:4]), sig(z[4:6]), np.tanh(z[6:8])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    out = dc.lstm(dc.Tensor(x), dc.Tensor(h), dc.Tensor(c), dc.Tensor(Wx), dc.Tensor(Wh),
                  dc.Tensor(b)).value
    assert np.allclose(out, np.concatenate([h_new, c_new]), atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8))
def test_softmax_is_a_distribution(xs):
    p = dc.softmax(dc.Tensor(np.array(xs))).value
    assert abs(p.sum() - 1) < 1e-12 and (p >= 0).all()
    lp = dc.log_softmax(dc.Tensor(np.array(xs))).value
    assert np.allclose(np.exp(lp), p, atol=1e-12)


def test_grad_check_on_small_network():
    rng = np.random.default_rng(1)
    W = dc.parameter(rng.normal(size=(3, 4)))
    b = dc.parameter(rng.normal(size=3))
    x = rng.normal(size=4)
    err = dc.grad_check(lambda: dc.total(dc.tanh(dc.fc(x, W, b))), {"W": W, "b": b})
    assert err < 1e-6


def test_grad_check_reports_kink_skips():
    # relu exactly at zero cannot be resolved by any finite step
    x = dc.parameter(np.array([0.0, 1.0]))
    err, det = dc.grad_check(lambda: dc.total(dc.relu(x)), [x], eps=1e-3,
                             return_details=True)
    assert det["skipped"] == 1 and err < 1e-9
