"""Finite-difference verification of reverse-mode gradients.

`max_rel_error` rebuilds the forward pass from a closure, runs one backward
pass for the analytic gradients, then perturbs parameter coordinates one at
a time with central differences (step 1e-5). The reported error for a
tensor is

    max_i |ad_i - fd_i| / max(max_i |ad_i|, max_i |fd_i|, 1e-8)

over the checked coordinates i, and the overall result is the worst tensor.
Anything below 1e-4 is within central-difference truncation noise for the
smooth float64 graphs used here.

The closure must be deterministic: stochastic stages (dropout, sampling)
need their rng re-seeded inside the closure on every call.
"""

import numpy as np

from .tensor import Tape

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4


def max_rel_error(make_loss, params, h=DEFAULT_STEP, sample=None, rng=None):
    """Worst relative error between autodiff and numeric gradients.

    make_loss: zero-argument callable returning a scalar Tensor, rebuilt
        from the current .data of `params` on every call.
    params: tensors (requires_grad=True) whose gradients are checked.
    sample: optional cap on checked coordinates per tensor; coordinates are
        drawn without replacement from `rng`. Default checks every one.
    """
    with Tape() as tape:
        loss = make_loss()
        tape.backward(loss)
    analytic = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        analytic.append(g.reshape(-1).copy())
        p.zero_grad()

    worst = 0.0
    for p, ad in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if sample is not None and n > sample:
            if rng is None:
                raise ValueError("sampled coordinate check needs an rng")
            idx = np.sort(rng.choice(n, size=sample, replace=False))
        else:
            idx = np.arange(n)
        fd = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            hi = make_loss().item()
            flat[i] = orig - h
            lo = make_loss().item()
            flat[i] = orig
            fd[j] = (hi - lo) / (2.0 * h)
        av = ad[idx]
        denom = max(np.max(np.abs(av), initial=0.0), np.max(np.abs(fd), initial=0.0), 1e-8)
        err = float(np.max(np.abs(av - fd), initial=0.0) / denom)
        worst = max(worst, err)
    return worst


def assert_grads(make_loss, params, tol=DEFAULT_TOL, h=DEFAULT_STEP, sample=None, rng=None):
    err = max_rel_error(make_loss, params, h=h, sample=sample, rng=rng)
    if err >= tol:
        raise AssertionError(f"gradient mismatch: rel error {err:.3e} >= {tol:.0e}")
    return err
