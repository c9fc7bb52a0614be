"""Central finite-difference checks for traced gradients."""
from __future__ import annotations

import numpy as np

from .tensor import Tape


def numerical_grad(fn, tensor, index, eps=1e-5):
    """d fn() / d tensor.data[index] by central differences (restores the value)."""
    base = tensor.data
    plus = base.copy()
    plus[index] += eps
    minus = base.copy()
    minus[index] -= eps
    tensor.data = plus
    fp = float(np.asarray(_value(fn())))
    tensor.data = minus
    fm = float(np.asarray(_value(fn())))
    tensor.data = base
    return (fp - fm) / (2 * eps)


def _value(out):
    return out.data if hasattr(out, "data") else out


def sample_entries(params: dict, n: int, rng):
    """``n`` (name, flat index) pairs drawn uniformly over all parameter entries."""
    names = sorted(params)
    sizes = np.array([params[k].size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flat = rng.permutation(int(offsets[-1]))[:n]
    picks = []
    for f in sorted(flat):
        i = int(np.searchsorted(offsets, f, side="right") - 1)
        picks.append((names[i], np.unravel_index(int(f - offsets[i]), params[names[i]].shape)))
    return picks


def check(fn, params: dict, entries, eps=1e-5):
    """Compare tape gradients with finite differences at ``entries``.

    Returns a list of (name, index, autodiff, numeric, rel_err) with
    rel_err = |ad - fd| / max(1, |fd|).
    """
    for p in params.values():
        p.requires_grad = True
    with Tape() as tape:
        loss = fn()
        grads = tape.backward(loss)
    rows = []
    for name, idx in entries:
        p = params[name]
        ad = float(grads.grad(p)[idx])
        fd = numerical_grad(fn, p, idx, eps)
        rows.append((name, idx, ad, fd, abs(ad - fd) / max(1.0, abs(fd))))
    return rows
