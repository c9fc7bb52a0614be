"""Latent rearrangement, opacity mixing, the CFM objective and Euler sampling.

The "latent" is a lossless space-to-depth rearrangement with factor ``s``:
pixel ``(s*i + dy, s*j + dx, ch)`` lands in cell ``(i, j)`` at channel
``(dy*s + dx)*C + ch``, multiplied by ``LATENT_GAIN``. The gain is a power of
two, so the round trip stays bitwise exact, and it lifts [0, 1] pixel values
to roughly the spread of the unit Gaussian used as the flow source. Frames are
never compressed in time, so a latent video has the same frame count as its
pixel video.

A velocity model is any callable ``model(z, t, cond, **kw) -> Tensor`` with
``z`` of shape (B, F, Hl, Wl, C) and ``t`` of shape (B, F).
"""
from __future__ import annotations

import numpy as np

from . import numcore as nc
from .numcore import Tensor

S_DEFAULT = 4
LATENT_GAIN = 8.0


def _pad_to(x, s):
    H, W = x.shape[-3:-1]
    ph, pw = (-H) % s, (-W) % s
    if ph or pw:
        pad = [(0, 0)] * (x.ndim - 3) + [(0, ph), (0, pw), (0, 0)]
        x = np.pad(x, pad)
    return x


def space_to_depth(x, s=S_DEFAULT):
    """(..., H, W, C) -> (..., H/s, W/s, s*s*C); zero-pads H and W up to multiples of s."""
    x = _pad_to(np.asarray(x), s)
    *lead, H, W, C = x.shape
    y = x.reshape(*lead, H // s, s, W // s, s, C)
    n = len(lead)
    y = np.moveaxis(y, n + 1, n + 2)  # (..., H/s, W/s, s_y, s_x, C)
    return y.reshape(*lead, H // s, W // s, s * s * C)


def depth_to_space(z, s=S_DEFAULT, size=None):
    """Inverse of :func:`space_to_depth`; ``size=(H, W)`` crops away padding."""
    z = np.asarray(z)
    *lead, Hl, Wl, D = z.shape
    if D % (s * s):
        raise ValueError(f"channel count {D} is not a multiple of s*s={s * s}")
    C = D // (s * s)
    n = len(lead)
    y = z.reshape(*lead, Hl, Wl, s, s, C)
    y = np.moveaxis(y, n + 2, n + 1)
    x = y.reshape(*lead, Hl * s, Wl * s, C)
    if size is not None:
        x = x[..., : size[0], : size[1], :]
    return x


def encode(frames, s=S_DEFAULT, gain=LATENT_GAIN):
    """Pixel video (..., H, W, 3) -> latent video (..., H/s, W/s, 3 s^2)."""
    frames = np.asarray(frames)
    if frames.shape[-1] != 3:
        raise ValueError(f"expected RGB frames, got trailing dim {frames.shape[-1]}")
    return space_to_depth(frames, s) * gain


def decode(z, s=S_DEFAULT, size=None, gain=LATENT_GAIN):
    return depth_to_space(np.asarray(z) / gain, s, size)


def opacity_downscale(O, s=S_DEFAULT):
    """Blockwise max over s x s pixel blocks: (..., H, W) -> (..., H/s, W/s)."""
    O = np.asarray(O)
    return space_to_depth(O[..., None], s).max(axis=-1)


def opacity_mix(z_deg, O_z, rng: nc.Rng):
    """z_mix = O_z z_deg + (1 - O_z) eps with fresh standard normal eps."""
    z_deg = np.asarray(z_deg)
    O_z = np.asarray(O_z)
    if O_z.shape != z_deg.shape[:-1]:
        raise ValueError(f"opacity shape {O_z.shape} does not match latent cells {z_deg.shape[:-1]}")
    eps = rng.normal(z_deg.shape).astype(z_deg.dtype, copy=False)
    o = O_z[..., None].astype(z_deg.dtype, copy=False)
    return o * z_deg + (1 - o) * eps


def _t_like(t, z):
    t = np.asarray(t, dtype=z.dtype if hasattr(z, "dtype") else np.float64)
    return t.reshape(t.shape + (1,) * (len(z.shape) - t.ndim))


def interpolant(z0, z1, t):
    """(z_t, v_t) on the straight path; ``t`` is a scalar or one level per leading index."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or np.any(t_arr > 1) or not np.all(np.isfinite(t_arr)):
        raise ValueError("interpolation time must lie in [0, 1]")
    if tuple(z0.shape) != tuple(z1.shape):
        raise ValueError(f"endpoint shapes differ: {tuple(z0.shape)} vs {tuple(z1.shape)}")
    tt = _t_like(t_arr, z0)
    return (1 - tt) * z0 + tt * z1, z1 - z0


def frame_times(t, B, F):
    """Broadcast per-sample (B,) or per-frame (B, F) levels to (B, F)."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        t = np.full(B, float(t))
    if t.ndim == 1:
        t = np.repeat(t[:, None], F, axis=1)
    if t.shape != (B, F):
        raise ValueError(f"time levels of shape {t.shape} do not fit batch ({B}, {F})")
    return t


def cfm_loss(model, batch, **kw):
    """Mean squared velocity error.

    ``batch`` is a dict with ``z_mix`` (source), ``z_clean`` (target), ``cond``,
    ``t`` of shape (B,) for one shared level per sample or (B, F) per frame,
    and an optional ``batch_id`` used in error messages.
    """
    z0, z1 = batch["z_mix"], batch["z_clean"]
    B, F = z0.shape[:2]
    t = frame_times(batch["t"], B, F)
    zt, vt = interpolant(np.asarray(z0), np.asarray(z1), t)
    pred = model(Tensor(zt), t, batch.get("cond"), **kw)
    loss = ((pred - vt) ** 2).mean()
    if not np.isfinite(loss.data):
        raise nc.NonFiniteError(f"non-finite CFM loss in batch {batch.get('batch_id', '?')}")
    return loss


def ode_sample(model, z0, cond, n_steps, t_start=0.0, **kw):
    """Explicit Euler from ``t_start`` to 1 with uniform steps; returns the final state."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    z = np.asarray(z0.data if isinstance(z0, Tensor) else z0)
    B, F = z.shape[:2]
    dt = (1.0 - t_start) / n_steps
    for k in range(n_steps):
        t = np.full((B, F), t_start + k * dt)
        v = model(Tensor(z), t, cond, **kw)
        z = z + dt * np.asarray(v.data if isinstance(v, Tensor) else v)
        if not np.all(np.isfinite(z)):
            raise nc.NonFiniteError(f"non-finite ODE state at step {k}")
    return z
