"""Minimal reverse-mode differentiation core used by the agent networks."""
from .engine import (DTYPE, Tape, Tensor, add, as_tensor, backward, concat, exp, fc,
                     is_recording, lincomb, log, log_softmax, lstm, mean, mul, neg,
                     neg_entropy, no_grad, one_hot, parameter, pick, relu, sigmoid,
                     slice_, softmax, square, tanh, total, trace_kinks)
from .gradcheck import grad_check, relative_error
from .optim import RMSprop, TrainingError, global_norm
from .params import CheckpointError, ParamStore, add_fc, add_lstm, orthogonal, scaled_uniform


def lstm_cell(params, name, h_prev, c_prev, x):
    """LSTM step with parameters ``{name}/Wx, {name}/Wh, {name}/b``; returns ``(h, c)``."""
    hc = lstm(x, h_prev, c_prev, params[f"{name}/Wx"], params[f"{name}/Wh"], params[f"{name}/b"])
    d = len(hc.value) // 2
    return slice_(hc, 0, d), slice_(hc, d, 2 * d)


def dense(params, name, x):
    """``params[name/W] @ x + params[name/b]``."""
    return fc(x, params[f"{name}/W"], params[f"{name}/b"])


__all__ = [
    "DTYPE", "Tape", "Tensor", "add", "as_tensor", "backward", "concat", "exp", "fc",
    "is_recording", "lincomb", "log", "log_softmax", "lstm", "mean", "mul", "neg",
    "neg_entropy", "no_grad", "one_hot", "parameter", "pick", "relu", "sigmoid", "slice_",
    "trace_kinks",
    "softmax", "square", "tanh", "total", "grad_check", "relative_error", "RMSprop",
    "TrainingError", "global_norm", "CheckpointError", "ParamStore", "add_fc", "add_lstm",
    "orthogonal", "scaled_uniform", "lstm_cell", "dense",
]
