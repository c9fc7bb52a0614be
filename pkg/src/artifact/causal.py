"""Block-causal generation: diffusion-forcing noise, a rolling KV cache,
chunked autoregressive rollout and a small distribution-matching
distillation (DMD) step written in velocity space.

Within a rollout, frame ``f`` of a chunk starting at absolute frame ``c``
attends to frames ``max(start, c - window) .. f``: everything still in the
cache plus the chunk's own frames up to ``f``. Finished chunks are re-encoded
once at t = 1 and their keys/values appended to the cache.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .flowmatch import cfm_loss, frame_times, interpolant, opacity_mix
from .numcore import Tensor

CHUNK_DEFAULT = 2
WINDOW_DEFAULT = 8
DMD_T_RANGE = (0.02, 0.98)


class CacheError(RuntimeError):
    pass


def block_causal_mask(n_frames, tokens_per_frame):
    """(n*T, n*T) boolean mask; query token i may attend to key token j iff frame(j) <= frame(i)."""
    if n_frames < 1 or tokens_per_frame < 1:
        raise ValueError("mask sizes must be positive")
    frame = np.arange(n_frames * tokens_per_frame) // tokens_per_frame
    return frame[None, :] <= frame[:, None]


@dataclass
class NoiseSchedule:
    levels: np.ndarray  # (B, F) in [0, 1]
    mode: str  # "diffusion_forcing" or "shared"


def df_noise(n_samples, n_frames, rng: nc.Rng, mode="diffusion_forcing"):
    """Independent U[0,1] level per frame, or one shared level per sample."""
    if mode == "diffusion_forcing":
        lv = rng.uniform((n_samples, n_frames))
    elif mode == "shared":
        lv = np.repeat(rng.uniform(n_samples)[:, None], n_frames, axis=1)
    else:
        raise ValueError(f"unknown noise mode {mode!r}")
    return NoiseSchedule(lv, mode)


# ---------------------------------------------------------------------------
# KV cache


class KVCache:
    """Per-frame self-attention keys/values for every block.

    Retained frames are always a contiguous run ending at the newest frame.
    """

    def __init__(self, window=WINDOW_DEFAULT):
        if window < 0:
            raise ValueError("window must be >= 0")
        self.window = int(window)
        self._store = {}  # frame -> {block: (k, v)}

    @property
    def frames(self):
        return sorted(self._store)

    @property
    def occupancy(self):
        return len(self._store)

    def append(self, collected: dict):
        """Add ``collected[block][frame] = (k, v)`` as produced by ``Denoiser.forward``."""
        by_frame = {}
        for block, frames in collected.items():
            for f, kv in frames.items():
                by_frame.setdefault(int(f), {})[block] = kv
        new = sorted(by_frame)
        if not new:
            return self
        if new != list(range(new[0], new[-1] + 1)):
            raise CacheError(f"appended frames {new} are not contiguous")
        if self._store and new[0] != self.frames[-1] + 1:
            raise CacheError(f"appended frames start at {new[0]} but the cache ends at {self.frames[-1]}")
        blocks = {len(v) for v in by_frame.values()}
        if len(blocks) != 1:
            raise CacheError("appended frames disagree on the number of blocks")
        self._store.update(by_frame)
        return self

    def kv(self, block, frame):
        try:
            return self._store[frame][block]
        except KeyError:
            held = f"[{self.frames[0]}, {self.frames[-1]}]" if self._store else "nothing"
            raise CacheError(f"keys for frame {frame}, block {block} requested; cache holds {held} (window {self.window})") from None

    def evict(self):
        while len(self._store) > self.window:
            del self._store[min(self._store)]
        return self


def evict(cache: KVCache) -> KVCache:
    return cache.evict()


# ---------------------------------------------------------------------------
# rollout


def _chunks(F, chunk_size):
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [np.arange(c, min(c + chunk_size, F)) for c in range(0, F, chunk_size)]


def window_lo(chunk_start, window, stream_start=0):
    return max(stream_start, chunk_start - window)


def rollout(model, z_deg, O_z, cond, chunk_size=CHUNK_DEFAULT, steps_per_chunk=4, window=WINDOW_DEFAULT, rng=None, cache=None, trace=False):
    """Generate all frames of ``cond`` chunk by chunk.

    ``z_deg`` (B,F,Hl,Wl,C) and ``O_z`` (B,F,Hl,Wl) are the degraded latents
    and downscaled opacity; pass zeros for frames without a rendering, which
    is the same as frame dropout. With ``trace`` the result is a Tensor whose
    gradient flows through the last Euler step of each chunk only.
    """
    if steps_per_chunk < 1:
        raise ValueError("steps_per_chunk must be >= 1")
    rng = nc.Rng(0) if rng is None else rng
    cache = KVCache(window) if cache is None else cache
    B, F = z_deg.shape[:2]
    fi = np.asarray(cond.frame_index, dtype=np.int64)
    if np.any(np.diff(fi) != 1):
        raise CacheError(f"rollout needs consecutive frame indices, got {fi.tolist()}")
    if cache.occupancy and cache.frames[-1] != fi[0] - 1:
        raise CacheError(f"cache ends at frame {cache.frames[-1]} but the stream starts at {fi[0]}")
    start = cache.frames[0] if cache.occupancy else int(fi[0])
    dt = 1.0 / steps_per_chunk
    outs = []
    for idx in _chunks(F, chunk_size):
        cc = cond.frames(idx)
        lo = window_lo(int(fi[idx[0]]), window, start)
        z = opacity_mix(z_deg[:, idx], O_z[:, idx], rng)
        n = len(idx)
        with nc.no_grad():
            for k in range(steps_per_chunk - (1 if trace else 0)):
                v = model(z, np.full((B, n), k * dt), cc, mode="block_causal", lo=lo, cache=cache)
                z = z + dt * v.data
                if not np.all(np.isfinite(z)):
                    raise nc.NonFiniteError(f"non-finite rollout state at frame {int(fi[idx[0]])}, step {k}")
        if trace:
            last = steps_per_chunk - 1
            zt = Tensor(z) + dt * model(z, np.full((B, n), last * dt), cc, mode="block_causal", lo=lo, cache=cache)
            z = zt.data
            outs.append(zt)
        else:
            outs.append(Tensor(z))
        with nc.no_grad():
            collected = {}
            model(z, np.ones((B, n)), cc, mode="block_causal", lo=lo, cache=cache, collect=collected)
        cache.append(collected).evict()
    out = nc.concat(outs, axis=1) if len(outs) > 1 else outs[0]
    return out if trace else out.data


def rollout_recompute(model, z_deg, O_z, cond, chunk_size=CHUNK_DEFAULT, steps_per_chunk=4, window=WINDOW_DEFAULT, rng=None):
    """Cache-free reference: every Euler step reprocesses the finished prefix
    (at t = 1) together with the current chunk, with the same per-frame
    attention ranges as :func:`rollout`."""
    rng = nc.Rng(0) if rng is None else rng
    B, F = z_deg.shape[:2]
    fi = np.asarray(cond.frame_index, dtype=np.int64)
    start = int(fi[0])
    lo_all = np.zeros(F, dtype=np.int64)
    for idx in _chunks(F, chunk_size):
        lo_all[idx] = window_lo(int(fi[idx[0]]), window, start)
    dt = 1.0 / steps_per_chunk
    done = []
    for idx in _chunks(F, chunk_size):
        upto = np.arange(idx[-1] + 1)
        cc = cond.frames(upto)
        z = opacity_mix(z_deg[:, idx], O_z[:, idx], rng)
        n = len(idx)
        for k in range(steps_per_chunk):
            zin = np.concatenate(done + [z], axis=1)
            t = np.concatenate([np.ones((B, len(upto) - n)), np.full((B, n), k * dt)], axis=1)
            v = model(zin, t, cc, mode="block_causal", lo=lo_all[upto])
            z = z + dt * v.data[:, -n:]
        done.append(z)
    return np.concatenate(done, axis=1)


# ---------------------------------------------------------------------------
# distribution matching distillation


class RolloutGenerator:
    """Few-step causal generator: a denoiser driven by :func:`rollout`."""

    def __init__(self, model, chunk_size=CHUNK_DEFAULT, steps_per_chunk=4, window=WINDOW_DEFAULT):
        self.model = model
        self.chunk_size = chunk_size
        self.steps_per_chunk = steps_per_chunk
        self.window = window

    @property
    def params(self):
        return self.model.params

    def sample(self, batch, rng, trace=False):
        return rollout(self.model, batch["z_deg"], batch["O_z"], batch["cond"], self.chunk_size, self.steps_per_chunk, self.window, rng, trace=trace)


def source_sample(batch, rng):
    return opacity_mix(batch["z_deg"], batch["O_z"], rng)


def _grads_by_name(grads, params):
    out = {}
    for k, p in params.items():
        g = grads.grad(p)
        if not np.all(np.isfinite(g)):
            raise nc.NonFiniteError(f"non-finite gradient in {k}")
        out[k] = g
    return out


def dmd_step(generator, teacher, fake_score, batch, rng: nc.Rng, t_range=DMD_T_RANGE, need_generator=True, model_kw=None):
    """One toy DMD evaluation.

    The generator draws x_hat; a fresh source sample z0 and level
    t ~ U[t_range] give x_t = (1-t) z0 + t x_hat, and the gradient on x_hat is
    g = v_fake(x_t) - v_teacher(x_t). The generator loss is the surrogate
    mean(x_hat * stopgrad(g)). The fake score is regressed on x_hat with the
    CFM objective. Returns (generator grads or None, fake grads, info).
    """
    model_kw = {"mode": "full"} if model_kw is None else model_kw
    cond = batch.get("cond")
    for p in generator.params.values():
        p.requires_grad = need_generator
    gen_grads, info = None, {}
    with nc.Tape() as tape:
        x_hat = generator.sample(batch, rng, trace=need_generator)
        x_data = x_hat.data if isinstance(x_hat, Tensor) else np.asarray(x_hat)
        B, F = x_data.shape[:2]
        z0 = source_sample(batch, rng)
        t = frame_times(rng.uniform(B, *t_range), B, F)
        xt, _ = interpolant(z0, x_data, t)
        with nc.no_grad():
            v_real = teacher(Tensor(xt), t, cond, **model_kw).data
            v_fake = fake_score(Tensor(xt), t, cond, **model_kw).data
        g = v_fake - v_real
        if not np.all(np.isfinite(g)):
            raise nc.NonFiniteError("non-finite score difference in dmd_step")
        info["score_gap"] = float(np.sqrt(np.mean(g * g)))
        if need_generator:
            surrogate = (x_hat * g).mean()
            gen_grads = _grads_by_name(tape.backward(surrogate), generator.params)
    for p in generator.params.values():
        p.requires_grad = False
    # fake score: flow matching on the generator's samples
    for p in fake_score.params.values():
        p.requires_grad = True
    fb = {"z_mix": source_sample(batch, rng), "z_clean": x_data, "t": rng.uniform(B), "cond": cond, "batch_id": "dmd-fake"}
    with nc.Tape() as tape:
        loss = cfm_loss(fake_score, fb, **model_kw)
        fake_grads = _grads_by_name(tape.backward(loss), fake_score.params)
    for p in fake_score.params.values():
        p.requires_grad = False
    info["fake_loss"] = float(loss.data)
    info["x_hat"] = x_data
    return gen_grads, fake_grads, info


def dmd_train(generator, teacher, fake_score, next_batch, rng: nc.Rng, n_steps, gen_opt, fake_opt, fake_ratio=5, model_kw=None, log_every=0, log=None):
    """Alternate ``fake_ratio`` fake-score updates with one generator update.

    ``next_batch(step)`` returns the conditioning batch for a step. Each of the
    ``n_steps`` iterations ends with a generator update. Returns a list of
    per-iteration info dicts (without the samples).
    """
    history = []
    for it in range(n_steps):
        for j in range(fake_ratio):
            last = j == fake_ratio - 1
            g_grads, f_grads, info = dmd_step(generator, teacher, fake_score, next_batch(it), rng, need_generator=last, model_kw=model_kw)
            fake_opt.step(f_grads)
        gen_opt.step(g_grads)
        info = {k: v for k, v in info.items() if k != "x_hat"}
        info["step"] = it
        history.append(info)
        if log is not None and log_every and (it % log_every == 0 or it == n_steps - 1):
            log.info("dmd step %d: score gap %.4g, fake loss %.4g", it, info["score_gap"], info["fake_loss"])
    return history
