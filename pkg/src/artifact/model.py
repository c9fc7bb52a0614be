"""The denoising transformer.

Tokens are (1, 2, 2) patches of the space-to-depth latent, kept in arrays of
shape (B, F, T, D) so every per-frame matrix product sees the same operand
layout whether a frame is processed alone, in a chunk, or with the whole
sequence. That is what makes cached and recomputed block-causal attention
agree bit for bit.

Block layout::

    x += (1 + g1) * SelfAttn(LN(x) * (1 + sc1) + sh1)      full or block-causal
    x += f_r(R) + f_o(O)                                   zero-init injection
    x += Wo CrossAttn(LN(x), refs + PoseEnc(rel pose))     V zero-init
    x += (1 + g2) * FFN(LN(x) * (1 + sc2) + sh2)

The modulation terms come from a per-frame time embedding through a
zero-initialised linear layer.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numcore as nc
from .flowmatch import space_to_depth
from .geometry import CameraPose, plucker_raymap, relative_pose
from .numcore import Tensor

POSE_DIM = 14


@dataclass(frozen=True)
class DenoiserConfig:
    embed_dim: int = 128
    n_heads: int = 4
    n_blocks: int = 4
    patch: tuple = (1, 2, 2)
    max_frames: int = 8
    s: int = 4
    ref_capacity: int = 4
    image_size: tuple = (32, 32)
    mlp_ratio: int = 4
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "patch", tuple(self.patch))
        object.__setattr__(self, "image_size", tuple(self.image_size))
        if self.embed_dim <= 0 or self.n_heads <= 0 or self.n_blocks <= 0:
            raise ValueError("embed_dim, n_heads and n_blocks must be positive")
        if self.embed_dim % self.n_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}")
        if self.embed_dim % 8:
            raise ValueError("embed_dim must be a multiple of 8 for the positional encoding")
        if self.patch != (1, 2, 2):
            raise ValueError(f"patch must be (1, 2, 2), got {self.patch}")
        H, W = self.image_size
        if H % (2 * self.s) or W % (2 * self.s):
            raise ValueError(f"image size {self.image_size} must be divisible by 2*s = {2 * self.s}")

    @property
    def latent_shape(self):
        H, W = self.image_size
        return H // self.s, W // self.s, 3 * self.s * self.s

    @property
    def tokens_per_frame(self):
        Hl, Wl, _ = self.latent_shape
        return (Hl // 2) * (Wl // 2)

    @property
    def patch_dim(self):
        return 4 * 3 * self.s * self.s

    @property
    def ray_dim(self):
        return 4 * 6 * self.s * self.s

    @property
    def opa_dim(self):
        return 4 * self.s * self.s

    def to_dict(self):
        d = asdict(self)
        d["patch"] = list(self.patch)
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def hash(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def param_count(cfg: DenoiserConfig) -> int:
    """Closed form. With D = embed_dim, M = mlp_ratio * D, P = 12 s^2 (patch),
    P_r = 24 s^2 (raymap patch), P_o = 4 s^2 (opacity patch):

        embed    P D + D
        time     2 (D^2 + D)
        block    (6D^2 + 6D) + (3D^2 + 3D) + (D^2 + D)            modulation, qkv, out
                 + (P_r D + D) + (P_o D + D)                        injection
                 + 3 (D^2 + D) + D^2                                cross q, k, v, out
                 + (14 D + D) + (D^2 + D)                           pose encoder
                 + (D M + M) + (M D + D)                            feed-forward
        head     (2D^2 + 2D) + (P D + P)
    """
    D, M = cfg.embed_dim, cfg.mlp_ratio * cfg.embed_dim
    P, Pr, Po = cfg.patch_dim, cfg.ray_dim, cfg.opa_dim
    block = (
        (6 * D * D + 6 * D) + (3 * D * D + 3 * D) + (D * D + D)
        + (Pr * D + D) + (Po * D + D)
        + 3 * (D * D + D) + D * D
        + (POSE_DIM * D + D) + (D * D + D)
        + (D * M + M) + (M * D + D)
    )  # fmt: skip
    return (P * D + D) + 2 * (D * D + D) + cfg.n_blocks * block + (2 * D * D + 2 * D) + (P * D + P)


# ---------------------------------------------------------------------------
# conditioning


@dataclass
class Conditioning:
    """Batched conditioning.

    raymaps (B,F,H,W,6), opacity (B,F,H,W), frame_index (F,) absolute frame
    numbers, ref_latents (B,N,Hl,Wl,C) clean reference latents (N may be 0),
    ref_pose (B,F,N,14) reference-from-target pose features.
    """

    raymaps: np.ndarray
    opacity: np.ndarray
    frame_index: np.ndarray
    ref_latents: np.ndarray | None = None
    ref_pose: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_refs(self):
        return 0 if self.ref_latents is None else self.ref_latents.shape[1]

    def frames(self, idx):
        """Conditioning restricted to the frame positions ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        return Conditioning(
            self.raymaps[:, idx],
            self.opacity[:, idx],
            self.frame_index[idx],
            self.ref_latents,
            None if self.ref_pose is None else self.ref_pose[:, idx],
            dict(self.extra),
        )

    def with_refs(self, ref_latents, ref_pose):
        return replace(self, ref_latents=ref_latents, ref_pose=ref_pose)


def pose_features(target: CameraPose, ref: CameraPose):
    R, t = relative_pose(target, ref)
    return np.concatenate([R.ravel(), t, [ref.fx / target.fx, ref.fy / target.fy]])


def build_conditioning(target_cams, opacity, ref_latents=None, ref_cams=(), frame_index=None):
    """Single-sample bundle (B = 1) from cameras; ``opacity`` is (F,H,W)."""
    F = len(target_cams)
    opacity = np.asarray(opacity, dtype=np.float64)
    if opacity.shape[0] != F:
        raise ValueError(f"{F} cameras but {opacity.shape[0]} opacity maps")
    ray = np.stack([plucker_raymap(c) for c in target_cams])
    if ray.shape[1:3] != opacity.shape[1:]:
        raise ValueError(f"raymap size {ray.shape[1:3]} differs from opacity size {opacity.shape[1:]}")
    fi = np.arange(F) if frame_index is None else np.asarray(frame_index, dtype=np.int64)
    refs, rp = None, None
    if ref_latents is not None and len(ref_cams):
        refs = np.asarray(ref_latents, dtype=np.float64)[None]
        rp = np.array([[pose_features(tc, rc) for rc in ref_cams] for tc in target_cams])[None]
    return Conditioning(ray[None], opacity[None], fi, refs, rp)


def stack_conditioning(conds):
    """Concatenate single-sample bundles along the batch axis."""
    c0 = conds[0]
    if any(not np.array_equal(c.frame_index, c0.frame_index) for c in conds):
        raise ValueError("bundles disagree on frame indices")
    ns = {c.n_refs for c in conds}
    if len(ns) != 1:
        raise ValueError(f"bundles disagree on reference count: {sorted(ns)}")
    has_refs = c0.n_refs > 0
    return Conditioning(
        np.concatenate([c.raymaps for c in conds]),
        np.concatenate([c.opacity for c in conds]),
        c0.frame_index.copy(),
        np.concatenate([c.ref_latents for c in conds]) if has_refs else None,
        np.concatenate([c.ref_pose for c in conds]) if has_refs else None,
    )


def frame_dropout(batch: dict, rng: nc.Rng, keys=("degraded", "opacity"), K=None):
    """Zero the last K frames of each sample's rendering and opacity, K ~ U{0..N}.

    Raymaps are left untouched. ``K`` may be given to force the drop count.
    Returns (new batch, K per sample).
    """
    out = dict(batch)
    first = np.asarray(batch[keys[0]])
    B, N = first.shape[:2]
    if K is None:
        K = np.array([int(rng.integers(0, N + 1)) for _ in range(B)], dtype=np.int64)
    K = np.broadcast_to(np.asarray(K, dtype=np.int64), (B,))
    if np.any((K < 0) | (K > N)):
        raise ValueError(f"drop counts {K} outside [0, {N}]")
    for k in keys:
        arr = np.array(batch[k], copy=True)
        for b in range(B):
            if K[b]:
                arr[b, N - K[b] :] = 0
        out[k] = arr
    return out, K


# ---------------------------------------------------------------------------
# token layout


def patchify(z):
    """(B,F,Hl,Wl,C) -> (B,F,T,4C); token order row-major, patch vector (dy, dx, c)."""
    B, F, Hl, Wl, C = z.shape
    if Hl % 2 or Wl % 2:
        raise nc.ShapeError(f"latent grid {(Hl, Wl)} not divisible by the (2, 2) patch")
    x = z.reshape(B, F, Hl // 2, 2, Wl // 2, 2, C)
    x = x.transpose((0, 1, 2, 4, 3, 5, 6))
    return x.reshape(B, F, (Hl // 2) * (Wl // 2), 4 * C)


def unpatchify(x, Hl, Wl):
    B, F, T, P = x.shape
    C = P // 4
    if T != (Hl // 2) * (Wl // 2) or P % 4:
        raise nc.ShapeError(f"cannot unpatchify {x.shape} into a {(Hl, Wl)} grid")
    y = x.reshape(B, F, Hl // 2, Wl // 2, 2, 2, C)
    y = y.transpose((0, 1, 2, 4, 3, 5, 6))
    return y.reshape(B, F, Hl, Wl, C)


def token_cells(Hl, Wl):
    """(T, 4, 2) latent-cell coordinates covered by each token, in patch-vector order."""
    rows = []
    for i in range(Hl // 2):
        for j in range(Wl // 2):
            rows.append([(2 * i + dy, 2 * j + dx) for dy in range(2) for dx in range(2)])
    return np.array(rows)


def _sincos(pos, dim):
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = np.asarray(pos, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def positional_encoding(frame_index, gh, gw, D, with_frame=True):
    """(F, gh*gw, D) fixed sinusoidal code: D/2 for frame, D/4 row, D/4 col."""
    df, dr = D // 2, D // 4
    dc = D - df - dr
    rr, cc = np.meshgrid(np.arange(gh), np.arange(gw), indexing="ij")
    sp = np.concatenate([_sincos(rr.ravel(), dr), _sincos(cc.ravel(), dc)], axis=-1)
    fr = _sincos(np.asarray(frame_index), df)
    if not with_frame:
        fr = np.zeros_like(fr)
    F, T = len(fr), len(sp)
    return np.concatenate([np.broadcast_to(fr[:, None], (F, T, df)), np.broadcast_to(sp[None], (F, T, dr + dc))], axis=-1)


def time_features(t, D):
    """Sinusoidal embedding of noise levels in [0, 1], (...,) -> (..., D)."""
    return _sincos(1000.0 * np.asarray(t, dtype=np.float64), D)


# ---------------------------------------------------------------------------
# the network


def _heads(x, n_heads):
    # (..., T, D) -> (..., H, T, dh)
    *lead, T, D = x.shape
    y = x.reshape(*lead, T, n_heads, D // n_heads)
    nd = len(lead)
    return y.transpose(tuple(range(nd)) + (nd + 1, nd, nd + 2))


def _merge_heads(x):
    # (..., H, T, dh) -> (..., T, D)
    *lead, H, T, dh = x.shape
    nd = len(lead)
    y = x.transpose(tuple(range(nd)) + (nd + 1, nd, nd + 2))
    return y.reshape(*lead, T, H * dh)


def _attend(q, k, v, scale):
    return nc.softmax((q @ nc.swapaxes(k, -1, -2)) * scale, axis=-1) @ v


class Denoiser:
    """Velocity model ``v(z_t, t, cond)`` with parameters in ``self.params``."""

    def __init__(self, cfg: DenoiserConfig = DenoiserConfig(), rng: nc.Rng | None = None):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        self.params = {}
        rng = nc.Rng(0) if rng is None else rng
        D, M = cfg.embed_dim, cfg.mlp_ratio * cfg.embed_dim
        P, Pr, Po = cfg.patch_dim, cfg.ray_dim, cfg.opa_dim

        def lin(name, fan_in, fan_out, zero=False, bias=True, std=None):
            if zero:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.normal((fan_in, fan_out)) * (std if std is not None else 1.0 / np.sqrt(fan_in))
            self._add(name + ".w", w)
            if bias:
                self._add(name + ".b", np.zeros(fan_out))

        lin("embed", P, D)
        lin("time.l1", D, D)
        lin("time.l2", D, D)
        for i in range(cfg.n_blocks):
            p = f"blocks.{i}."
            lin(p + "mod", D, 6 * D, zero=True)
            lin(p + "attn.qkv", D, 3 * D)
            lin(p + "attn.out", D, D)
            lin(p + "inject.ray", Pr, D, zero=True)
            lin(p + "inject.opacity", Po, D, zero=True)
            lin(p + "ref.q", D, D)
            lin(p + "ref.k", D, D)
            lin(p + "ref.v", D, D, zero=True)
            lin(p + "ref.out", D, D, bias=False)
            lin(p + "ref.pose1", POSE_DIM, D)
            lin(p + "ref.pose2", D, D, zero=True)
            lin(p + "ffn.l1", D, M)
            lin(p + "ffn.l2", M, D)
        lin("head.mod", D, 2 * D, zero=True)
        lin("head.out", D, P, std=0.02)

    def _add(self, name, arr):
        self.params[name] = Tensor(np.asarray(arr, dtype=self.dtype), name=name)

    # -- parameter plumbing ------------------------------------------------
    def __getitem__(self, name):
        return self.params[name]

    def n_params(self):
        return int(sum(p.size for p in self.params.values()))

    def state(self):
        return {k: v.data for k, v in self.params.items()}

    def load_state(self, state):
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"{k}: expected shape {self.params[k].shape}, got {v.shape}")
            self.params[k].data = np.array(v, dtype=self.dtype)

    def copy(self):
        other = Denoiser.__new__(Denoiser)
        other.cfg, other.dtype = self.cfg, self.dtype
        other.params = {k: Tensor(v.data.copy(), name=k) for k, v in self.params.items()}
        return other

    def _lin(self, x, name):
        y = x @ self.params[name + ".w"]
        b = self.params.get(name + ".b")
        return y if b is None else y + b

    # -- sub-layers --------------------------------------------------------
    def embed_latents(self, z, frame_index, with_frame=True):
        Hl, Wl, _ = self.cfg.latent_shape
        tok = self._lin(patchify(z), "embed")
        pe = positional_encoding(frame_index, Hl // 2, Wl // 2, self.cfg.embed_dim, with_frame)
        return tok + pe.astype(self.dtype)

    def time_embedding(self, t):
        """(B, F) levels -> (B, F, 1, D). Each frame is its own 1-row product so
        the arithmetic does not depend on how many frames share the call."""
        tf = time_features(t, self.cfg.embed_dim).astype(self.dtype)
        h = self._lin(Tensor(tf[..., None, :]), "time.l1")
        return self._lin(nc.silu(h), "time.l2")

    def condition_tokens(self, cond: Conditioning):
        s = self.cfg.s
        r = patchify(space_to_depth(np.asarray(cond.raymaps), s)).astype(self.dtype)
        o = patchify(space_to_depth(np.asarray(cond.opacity)[..., None], s)).astype(self.dtype)
        return r, o

    def inject_conditioning(self, x, r_tok, o_tok, block_index):
        p = f"blocks.{block_index}.inject."
        if r_tok.shape[:-1] != tuple(x.shape[:-1]) or o_tok.shape[:-1] != tuple(x.shape[:-1]):
            raise nc.ShapeError(f"conditioning tokens {r_tok.shape}/{o_tok.shape} do not match {x.shape}")
        return x + self._lin(r_tok, p + "ray") + self._lin(o_tok, p + "opacity")

    def reference_tokens(self, cond: Conditioning):
        if cond.n_refs == 0:
            return None
        refs = np.asarray(cond.ref_latents, dtype=self.dtype)
        B, N = refs.shape[:2]
        tok = self.embed_latents(refs, np.zeros(N, dtype=np.int64), with_frame=False)
        return nc.layer_norm(tok)  # (B, N, T, D)

    def reference_attend(self, x, ref_tok, ref_pose, block_index):
        if ref_tok is None:
            return x
        p = f"blocks.{block_index}.ref."
        cfg = self.cfg
        B, F, T, D = x.shape
        N = ref_tok.shape[1]
        pose = Tensor(np.asarray(ref_pose, dtype=self.dtype))  # (B,F,N,14)
        pe = self._lin(nc.silu(self._lin(pose, p + "pose1")), p + "pose2")  # (B,F,N,D)
        kin = ref_tok.reshape(B, 1, N, ref_tok.shape[2], D) + pe.reshape(B, F, N, 1, D)
        kin = kin.reshape(B, F, N * ref_tok.shape[2], D)
        q = _heads(self._lin(nc.layer_norm(x), p + "q"), cfg.n_heads)  # (B,F,H,T,dh)
        k = _heads(self._lin(kin, p + "k"), cfg.n_heads)  # (B,F,H,NT,dh)
        v = _heads(self._lin(ref_tok.reshape(B, 1, N * ref_tok.shape[2], D), p + "v"), cfg.n_heads)
        out = _merge_heads(_attend(q, k, v, 1.0 / np.sqrt(D // cfg.n_heads)))
        return x + self._lin(out, p + "out")

    def self_attend(self, h, block_index, mode, frame_index, lo, cache, collect):
        cfg = self.cfg
        B, F, T, D = h.shape
        qkv = self._lin(h, f"blocks.{block_index}.attn.qkv").reshape(B, F, T, 3, D)
        q = _heads(qkv[:, :, :, 0], cfg.n_heads)  # (B,F,H,T,dh)
        k = _heads(qkv[:, :, :, 1], cfg.n_heads)
        v = _heads(qkv[:, :, :, 2], cfg.n_heads)
        scale = 1.0 / np.sqrt(D // cfg.n_heads)
        if collect is not None:
            for j, f in enumerate(frame_index):
                collect.setdefault(block_index, {})[int(f)] = (k.data[:, j].copy(), v.data[:, j].copy())
        if mode == "full":
            Hh, dh = cfg.n_heads, D // cfg.n_heads
            qa = q.transpose((0, 2, 1, 3, 4)).reshape(B, Hh, F * T, dh)
            ka = k.transpose((0, 2, 1, 3, 4)).reshape(B, Hh, F * T, dh)
            va = v.transpose((0, 2, 1, 3, 4)).reshape(B, Hh, F * T, dh)
            out = _attend(qa, ka, va, scale).reshape(B, Hh, F, T, dh).transpose((0, 2, 1, 3, 4))
            return _merge_heads(out)
        # block-causal: frame f attends to frames lo[f]..f; keys outside the
        # current window come from the cache
        pos = {int(f): j for j, f in enumerate(frame_index)}
        outs = []
        for j, f in enumerate(frame_index):
            ks, vs = [], []
            for g in range(int(lo[j]), int(f) + 1):
                if g in pos:
                    ks.append(k[:, pos[g]])
                    vs.append(v[:, pos[g]])
                elif cache is not None:
                    kc, vc = cache.kv(block_index, g)
                    ks.append(Tensor(kc))
                    vs.append(Tensor(vc))
                else:
                    raise KeyError(f"frame {f} needs keys of frame {g}, which is neither in the input nor cached")
            kk = nc.concat(ks, axis=2) if len(ks) > 1 else ks[0]
            vv = nc.concat(vs, axis=2) if len(vs) > 1 else vs[0]
            outs.append(_attend(q[:, j], kk, vv, scale))
        return _merge_heads(nc.stack(outs, axis=1))

    # -- forward -------------------------------------------------------------
    def forward(self, z, t, cond: Conditioning, mode="full", lo=None, cache=None, collect=None):
        """Velocity for latents ``z`` (B,F,Hl,Wl,C) at levels ``t`` (B,F).

        ``mode`` is "full" or "block_causal". In block-causal mode ``lo`` (F,)
        gives each frame's first visible absolute frame (default 0) and
        ``cache`` supplies keys/values for visible frames not in ``z``.
        ``collect``, if a dict, receives this call's per-frame keys/values as
        ``collect[block][frame] = (k, v)``.
        """
        if mode not in ("full", "block_causal"):
            raise ValueError(f"unknown attention mode {mode!r}")
        cfg = self.cfg
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.dtype != self.dtype:
            z = Tensor(z.data.astype(self.dtype))
        B, F, Hl, Wl, C = z.shape
        if (Hl, Wl, C) != cfg.latent_shape:
            raise nc.ShapeError(f"latent shape {(Hl, Wl, C)} does not match config {cfg.latent_shape}")
        t = np.asarray(t, dtype=np.float64)
        if t.shape != (B, F):
            raise nc.ShapeError(f"time levels must have shape {(B, F)}, got {t.shape}")
        frame_index = np.asarray(cond.frame_index, dtype=np.int64)
        if frame_index.shape != (F,):
            raise nc.ShapeError(f"frame_index must have shape ({F},), got {frame_index.shape}")
        if mode == "block_causal":
            lo = np.zeros(F, dtype=np.int64) if lo is None else np.broadcast_to(np.asarray(lo, dtype=np.int64), (F,))
        if cond.raymaps.shape[:2] != (B, F) or cond.opacity.shape[:2] != (B, F):
            raise nc.ShapeError(f"conditioning covers {cond.raymaps.shape[:2]} frames, latents have {(B, F)}")
        if cond.n_refs > cfg.ref_capacity:
            raise ValueError(f"{cond.n_refs} references exceed ref_capacity {cfg.ref_capacity}")

        D = cfg.embed_dim
        x = self.embed_latents(z, frame_index)
        e = nc.silu(self.time_embedding(t))  # (B,F,1,D)
        r_tok, o_tok = self.condition_tokens(cond)
        ref_tok = self.reference_tokens(cond)
        for i in range(cfg.n_blocks):
            p = f"blocks.{i}."
            m = self._lin(e, p + "mod")
            sh1, sc1, g1 = m[..., 0:D], m[..., D : 2 * D], m[..., 2 * D : 3 * D]
            sh2, sc2, g2 = m[..., 3 * D : 4 * D], m[..., 4 * D : 5 * D], m[..., 5 * D :]
            h = nc.layer_norm(x) * (1.0 + sc1) + sh1
            a = self.self_attend(h, i, mode, frame_index, lo, cache, collect)
            x = x + (1.0 + g1) * self._lin(a, p + "attn.out")
            x = self.inject_conditioning(x, r_tok, o_tok, i)
            x = self.reference_attend(x, ref_tok, cond.ref_pose, i)
            h = nc.layer_norm(x) * (1.0 + sc2) + sh2
            x = x + (1.0 + g2) * self._lin(nc.gelu(self._lin(h, p + "ffn.l1")), p + "ffn.l2")
        m = self._lin(e, "head.mod")
        h = nc.layer_norm(x) * (1.0 + m[..., D:]) + m[..., :D]
        return unpatchify(self._lin(h, "head.out"), Hl, Wl)

    __call__ = forward


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: Denoiser, extra: dict | None = None):
    """Weights in the SPFL container at ``path``; config JSON next to it."""
    path = Path(path)
    nc.io.save(path, model.state())
    meta = {"config": model.cfg.to_dict(), "config_hash": model.cfg.hash()}
    if extra:
        meta.update(extra)
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    cfg = DenoiserConfig.from_dict(meta["config"])
    model = Denoiser(cfg)
    model.load_state(nc.io.load(path))
    return model, meta
