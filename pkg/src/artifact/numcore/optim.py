from __future__ import annotations

import numpy as np

from .tensor import GradMap


class AdamW:
    """AdamW over a name -> Tensor parameter dict.

    Parameter arrays are replaced on every step, never mutated in place, so
    arrays handed out earlier stay valid snapshots.
    """

    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads, lr=None):
        """``grads`` is a GradMap keyed by tensor or a dict keyed by parameter name."""
        by_name = not isinstance(grads, GradMap)
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, p in self.params.items():
            g = grads.get(k) if by_name else grads.get(p)
            if g is None:
                continue
            m = self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            upd = (m / c1) / (np.sqrt(v / c2) + self.eps)
            new = p.data - lr * upd
            if self.weight_decay:
                new = new - lr * self.weight_decay * p.data
            p.data = new.astype(p.dtype, copy=False)

    def state(self, prefix="opt/") -> dict:
        out = {f"{prefix}t": np.array([self.t], dtype=np.int64)}
        for k in self.params:
            out[f"{prefix}m/{k}"] = self.m[k]
            out[f"{prefix}v/{k}"] = self.v[k]
        return out

    def load_state(self, blob: dict, prefix="opt/"):
        self.t = int(blob[f"{prefix}t"][0])
        for k in self.params:
            self.m[k] = blob[f"{prefix}m/{k}"].copy()
            self.v[k] = blob[f"{prefix}v/{k}"].copy()
