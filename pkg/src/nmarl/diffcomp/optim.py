"""RMSprop with global-norm gradient clipping."""
from __future__ import annotations

import numpy as np


class TrainingError(RuntimeError):
    pass


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))


class RMSprop:
    """``p -= lr * g / sqrt(v + eps)`` with ``v = decay * v + (1 - decay) * g**2``.

    Gradients are first rescaled so their joint L2 norm is at most ``clip``.
    Running averages live in ``store.opt_state`` so they travel with the store.
    """

    def __init__(self, decay=0.99, eps=1e-5, clip=40.0):
        self.decay = decay
        self.eps = eps
        self.clip = clip

    def step(self, store, lr, names=None, grads=None):
        """Apply one update. ``lr`` is a float or a callable ``name -> float``.

        Returns the pre-clip global gradient norm.
        """
        names = list(store) if names is None else list(names)
        if grads is None:
            grads = {n: store[n].grad for n in names}
        for n in names:
            g = grads[n]
            if g is None:
                grads[n] = g = np.zeros_like(store[n].value)
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for parameter {n!r}")
        norm = global_norm(grads[n] for n in names)
        scale = 1.0
        if self.clip is not None and norm > self.clip:
            scale = self.clip / norm
        for n in names:
            g = grads[n] * scale if scale != 1.0 else grads[n]
            p = store[n]
            state = store.opt_state.setdefault(n, {"sq": np.zeros_like(p.value)})
            sq = state["sq"]
            sq *= self.decay
            sq += (1.0 - self.decay) * g * g
            step_lr = lr(n) if callable(lr) else lr
            p.value -= step_lr * g / np.sqrt(sq + self.eps)
        return norm
