"""Seeded, counter-based random streams.

Uniforms come from numpy's Philox bit generator, which is counter-based and
bit-identical across platforms; normals are built from those uniforms with the
Box-Muller transform so no platform-specific sampling path is involved.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor

_MASK64 = (1 << 64) - 1


class Rng:
    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def __repr__(self):
        return f"Rng(seed={self.seed})"

    def uniform(self, shape=(), low=0.0, high=1.0):
        return low + (high - low) * self._gen.random(shape)

    def normal(self, shape=()):
        shape = (int(shape),) if np.isscalar(shape) else tuple(int(n) for n in shape)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = 1.0 - self._gen.random(m)  # (0, 1]
        u2 = self._gen.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n].reshape(shape)

    def integers(self, low, high=None, shape=None):
        """Integers in ``[low, high)``."""
        if high is None:
            low, high = 0, low
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def get_state(self) -> dict:
        """JSON-safe snapshot of the stream position."""
        st = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "counter": [int(x) for x in st["state"]["counter"]],
            "key": [int(x) for x in st["state"]["key"]],
            "buffer": [int(x) for x in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    def set_state(self, d: dict) -> "Rng":
        self.seed = int(d["seed"])
        st = self._gen.bit_generator.state
        st["state"] = {"counter": np.array(d["counter"], dtype=np.uint64), "key": np.array(d["key"], dtype=np.uint64)}
        st["buffer"] = np.array(d["buffer"], dtype=np.uint64)
        st["buffer_pos"] = d["buffer_pos"]
        st["has_uint32"] = d["has_uint32"]
        st["uinteger"] = d["uinteger"]
        self._gen.bit_generator.state = st
        return self

    def child(self, *keys) -> "Rng":
        """Independent stream derived from this seed and integer ``keys``."""
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in keys))
        return Rng(int(ss.generate_state(1, dtype=np.uint64)[0]))


def randn(rng: Rng, shape, dtype=np.float64) -> Tensor:
    """I.i.d. standard normal samples; advances ``rng``."""
    return Tensor(rng.normal(shape).astype(dtype))
