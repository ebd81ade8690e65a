"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

import numpy as np

from .engine import Tape, backward, no_grad, trace_kinks


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(f, params, eps=1e-6, max_per_tensor=None, rng=None, floor=1e-6,
               return_details=False, stencil=2, kink_retries=2):
    """Compare d f()/d params from :func:`backward` with central differences.

    ``f`` is a zero-argument callable building a scalar :class:`Tensor` from
    ``params`` (a mapping name -> parameter tensor, or a list of tensors).
    With ``max_per_tensor`` set, that many coordinates per tensor are sampled
    with ``rng``; otherwise every coordinate is checked. ``stencil=4`` uses the
    fourth-order central formula, which tolerates a larger ``eps`` and so
    suffers less cancellation on tiny gradients.

    ReLU kinks: when a perturbation flips any relu's activation pattern the
    step is shrunk tenfold (up to ``kink_retries`` times); coordinates that
    still straddle a kink are not differentiable at finite-difference scale
    and are skipped. The skip count is reported under ``"skipped"`` in the
    details.
    Returns the maximum relative error.
    """
    if not hasattr(params, "items"):
        params = {getattr(p, "name", None) or f"p{k}": p for k, p in enumerate(params)}
    items = list(params.items())
    tape = Tape()
    with tape, trace_kinks() as tr:
        loss = f()
    base_pattern = tr.pattern()
    if stencil not in (2, 4):
        raise ValueError("stencil must be 2 or 4")
    if loss.value.size != 1:
        raise ValueError("grad_check needs a scalar-valued computation")
    backward(loss, tape)
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
                for n, p in items}
    tape.clear()

    rng = rng if rng is not None else np.random.default_rng(0)
    worst, details, skipped = 0.0, {}, 0
    with no_grad():
        for n, p in items:
            flat = p.value.reshape(-1)
            idx = np.arange(flat.size)
            if max_per_tensor is not None and flat.size > max_per_tensor:
                idx = np.sort(rng.choice(flat.size, size=max_per_tensor, replace=False))
            num = np.full(len(idx), np.nan)
            for k, i in enumerate(idx):
                orig = flat[i]
                h = eps
                for _ in range(kink_retries + 1):
                    num[k], smooth = _central(f, flat, i, h, stencil, base_pattern)
                    if smooth:
                        break
                    num[k] = np.nan
                    h /= 10
                flat[i] = orig
            ok = ~np.isnan(num)
            skipped += int((~ok).sum())
            err = relative_error(analytic[n].reshape(-1)[idx][ok], num[ok], floor)
            e = float(err.max()) if err.size else 0.0
            details[n] = e
            worst = max(worst, e)
    details["skipped"] = skipped
    return (worst, details) if return_details else worst


def _central(f, flat, i, h, stencil, base_pattern):
    """Central difference at coordinate ``i``; also reports kink-freeness."""
    orig = flat[i]
    smooth = True

    def at(x):
        nonlocal smooth
        flat[i] = x
        with trace_kinks() as tr:
            v = float(f().value)
        p = tr.pattern()
        smooth = smooth and p.shape == base_pattern.shape and bool((p == base_pattern).all())
        return v

    d1 = at(orig + h) - at(orig - h)
    if stencil == 2:
        val = d1 / (2 * h)
    else:
        d2 = at(orig + 2 * h) - at(orig - 2 * h)
        val = (8 * d1 - d2) / (12 * h)
    flat[i] = orig
    return val, smooth
