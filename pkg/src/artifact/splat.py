"""Toy differentiable Gaussian splatting.

Scenes are sets of anisotropic 3D Gaussians with view-independent colour.
Rendering projects each primitive with the EWA linearisation, sorts the
visible ones once per camera by distance from the camera centre, and
composites front to back on a black background. Everything is written with :mod:`artifact.numcore` ops so
the photometric loss can be differentiated w.r.t. every primitive field.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numcore as nc
from .geometry import CameraPose, look_at, pixel_grid
from .numcore import Tensor

log = logging.getLogger(__name__)

NEAR = 0.1
ALPHA_MAX = 0.999
COV2D_BLUR = 0.3
WALL_FACTOR = 1.95
FRUSTUM_GUARD = 1.3


@dataclass(frozen=True)
class GaussianPrimitive:
    mu: np.ndarray
    scale: np.ndarray
    quat: np.ndarray
    sigma: float
    c: np.ndarray

    def to_dict(self):
        return {
            "mu": [float(v) for v in self.mu],
            "scale": [float(v) for v in self.scale],
            "quat": [float(v) for v in self.quat],
            "sigma": float(self.sigma),
            "c": [float(v) for v in self.c],
        }


@dataclass
class Scene:
    """Primitives stored column-wise: ``mu`` (P,3), ``scale`` (P,3),
    ``quat`` (P,4, w first), ``sigma`` (P,), ``color`` (P,3)."""

    mu: np.ndarray
    scale: np.ndarray
    quat: np.ndarray
    sigma: np.ndarray
    color: np.ndarray
    extent: float = 1.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(-1, 3)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(-1, 3)
        self.quat = np.asarray(self.quat, dtype=np.float64).reshape(-1, 4)
        self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(-1)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(-1, 3)
        n = len(self.mu)
        if not all(len(a) == n for a in (self.scale, self.quat, self.sigma, self.color)):
            raise ValueError("scene arrays disagree on the primitive count")

    def __len__(self):
        return len(self.mu)

    @property
    def primitives(self):
        return [GaussianPrimitive(self.mu[i], self.scale[i], self.quat[i], float(self.sigma[i]), self.color[i]) for i in range(len(self))]

    @classmethod
    def empty(cls, extent=1.0):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3)), extent)

    @classmethod
    def from_primitives(cls, prims, extent=1.0):
        if not prims:
            return cls.empty(extent)
        return cls(
            np.stack([p.mu for p in prims]),
            np.stack([p.scale for p in prims]),
            np.stack([p.quat for p in prims]),
            np.array([p.sigma for p in prims]),
            np.stack([p.c for p in prims]),
            extent,
        )

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Scene(self.mu[idx], self.scale[idx], self.quat[idx], self.sigma[idx], self.color[idx], self.extent)

    def permuted(self, perm):
        return self.subset(perm)

    def concat(self, other):
        return Scene(
            np.concatenate([self.mu, other.mu]),
            np.concatenate([self.scale, other.scale]),
            np.concatenate([self.quat, other.quat]),
            np.concatenate([self.sigma, other.sigma]),
            np.concatenate([self.color, other.color]),
            self.extent,
        )

    def copy(self):
        return Scene(self.mu.copy(), self.scale.copy(), self.quat.copy(), self.sigma.copy(), self.color.copy(), self.extent)

    def arrays(self):
        return {"mu": self.mu, "scale": self.scale, "quat": self.quat, "sigma": self.sigma, "color": self.color}

    def validate(self):
        if np.any(self.scale <= 0):
            raise ValueError("scales must be positive")
        if np.abs(np.linalg.norm(self.quat, axis=1) - 1).max(initial=0) > 1e-9:
            raise ValueError("quaternions must be unit length")
        if np.any((self.sigma < 0) | (self.sigma > 1)) or np.any((self.color < 0) | (self.color > 1)):
            raise ValueError("opacity and colour must lie in [0, 1]")
        return self


@dataclass
class Rendering:
    rgb: np.ndarray
    opacity: np.ndarray
    depth_order_len: int = 0


@dataclass(frozen=True)
class DegradeParams:
    tau_vis: float = 0.05
    eta: float = 0.02
    sigma_jitter: bool = True


@dataclass
class FitResult:
    scene: Scene
    losses: list = field(default_factory=list)

    @property
    def initial_loss(self):
        return self.losses[0] if self.losses else float("nan")

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else float("nan")


# ---------------------------------------------------------------------------
# projection


def quat_to_rotmat(q):
    """(P,4) unit quaternions (w, x, y, z) -> (P,3,3) rotations."""
    w, x, y, z = (q[:, i] for i in range(4))
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )


def _quat_to_rotmat_t(q):
    # same as quat_to_rotmat on tensors; returns the 9 entries row-major
    w, x, y, z = (q[:, i] for i in range(4))
    return [
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ]  # fmt: skip


def _project_t(mu, scale, quat, cam: CameraPose):
    """Tensor projection. Returns (mean2d_x, mean2d_y, cov a, b, c, depth)."""
    dtype = mu.dtype
    Rc = np.asarray(cam.R, dtype=dtype)
    pc = (mu - np.asarray(cam.t, dtype=dtype)) @ Tensor(Rc)
    X, Y, Z = pc[:, 0], pc[:, 1], pc[:, 2]
    mx = cam.fx * X / Z + cam.cx
    my = cam.fy * Y / Z + cam.cy
    q = quat / nc.sqrt((quat * quat).sum(axis=1, keepdims=True))
    r = _quat_to_rotmat_t(q)
    # T = J W with W = R_cam^T; rows of T are (fx/Z) (w0 - X/Z w2), (fy/Z) (w1 - Y/Z w2)
    W = Rc.T
    invz = 1.0 / Z
    t0 = [cam.fx * invz * (W[0, k] - X * invz * W[2, k]) for k in range(3)]
    t1 = [cam.fy * invz * (W[1, k] - Y * invz * W[2, k]) for k in range(3)]
    # A = T R_q diag(scale); cov2d = A A^T
    a0, a1 = [], []
    for j in range(3):
        sj = scale[:, j]
        a0.append((t0[0] * r[j] + t0[1] * r[3 + j] + t0[2] * r[6 + j]) * sj)
        a1.append((t1[0] * r[j] + t1[1] * r[3 + j] + t1[2] * r[6 + j]) * sj)
    ca = a0[0] * a0[0] + a0[1] * a0[1] + a0[2] * a0[2] + COV2D_BLUR
    cb = a0[0] * a1[0] + a0[1] * a1[1] + a0[2] * a1[2]
    cc = a1[0] * a1[0] + a1[1] * a1[1] + a1[2] * a1[2] + COV2D_BLUR
    return mx, my, ca, cb, cc, Z


def project(prim: GaussianPrimitive, cam: CameraPose, blur=COV2D_BLUR):
    """Perspective mean, EWA 2x2 covariance (px^2) and depth of one primitive.

    Returns ``None`` when the primitive is culled (behind the near plane or
    outside the guard band around the image).
    """
    pc = cam.world_to_camera(prim.mu)
    if not visible(np.asarray(prim.mu)[None], cam)[0]:
        return None
    X, Y, Z = pc
    mean2d = np.array([cam.fx * X / Z + cam.cx, cam.fy * Y / Z + cam.cy])
    J = np.array([[cam.fx / Z, 0, -cam.fx * X / Z**2], [0, cam.fy / Z, -cam.fy * Y / Z**2]])
    Rq = quat_to_rotmat(np.asarray(prim.quat, float)[None] / np.linalg.norm(prim.quat))[0]
    cov3 = Rq @ np.diag(np.asarray(prim.scale) ** 2) @ Rq.T
    W = cam.R.T
    cov2d = J @ W @ cov3 @ W.T @ J.T + blur * np.eye(2)
    return mean2d, cov2d, float(Z)


# ---------------------------------------------------------------------------
# rendering


def visible(mu, cam: CameraPose):
    """Near-plane and guard-band frustum test on primitive centres."""
    pc = cam.world_to_camera(mu)
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.abs(pc[:, 0] / z) * cam.fx
        y = np.abs(pc[:, 1] / z) * cam.fy
    lim_x = FRUSTUM_GUARD * max(cam.cx, cam.width - cam.cx)
    lim_y = FRUSTUM_GUARD * max(cam.cy, cam.height - cam.cy)
    return (z > NEAR) & (x <= lim_x) & (y <= lim_y)


def _visible_order(mu, cam):
    # sort by distance to the camera centre
    vis = np.nonzero(visible(mu, cam))[0]
    dist = np.linalg.norm(mu[vis] - cam.t, axis=1)
    return vis[np.argsort(dist, kind="stable")]


def _alphas_t(mu, scale, quat, sigma, cam, px, py):
    mx, my, ca, cb, cc, _ = _project_t(mu, scale, quat, cam)
    det = ca * cc - cb * cb
    dx = px[None, :] - mx.reshape(-1, 1)
    dy = py[None, :] - my.reshape(-1, 1)
    power = (-0.5) * (cc.reshape(-1, 1) * dx * dx - 2.0 * cb.reshape(-1, 1) * dx * dy + ca.reshape(-1, 1) * dy * dy) / det.reshape(-1, 1)
    return nc.minimum(sigma.reshape(-1, 1) * nc.exp(power), ALPHA_MAX)


def render_tensors(mu, scale, quat, sigma, color, cam: CameraPose):
    """Differentiable render on tensors; returns (rgb (H,W,3), opacity (H,W), n)."""
    H, W = cam.height, cam.width
    dtype = mu.dtype
    order = _visible_order(mu.data, cam)
    if len(order) == 0:
        return Tensor(np.zeros((H, W, 3), dtype)), Tensor(np.zeros((H, W), dtype)), 0
    mu, scale, quat = nc.take(mu, order), nc.take(scale, order), nc.take(quat, order)
    sigma, color = nc.take(sigma, order), nc.take(color, order)
    u, v = pixel_grid(W, H)
    alpha = _alphas_t(mu, scale, quat, sigma, cam, u.ravel().astype(dtype), v.ravel().astype(dtype))
    log_t = nc.log(1.0 - alpha)
    cum = nc.cumsum(log_t, axis=0)
    trans = nc.exp(nc.concat([Tensor(np.zeros((1, H * W), dtype)), cum[:-1]], axis=0))
    weights = alpha * trans
    rgb = nc.transpose(weights) @ color
    opacity = 1.0 - nc.exp(cum[-1])
    return rgb.reshape(H, W, 3), opacity.reshape(H, W), len(order)


def scene_tensors(scene: Scene, dtype=np.float64, requires_grad=False):
    return {k: Tensor(v.astype(dtype), requires_grad=requires_grad, name=k) for k, v in scene.arrays().items()}


def render(scene: Scene, cam: CameraPose, dtype=np.float64) -> Rendering:
    t = scene_tensors(scene, dtype)
    rgb, op, n = render_tensors(t["mu"], t["scale"], t["quat"], t["sigma"], t["color"], cam)
    return Rendering(rgb.data, op.data, n)


def peak_alpha(scene: Scene, cam: CameraPose, occlusion=True):
    """Per-primitive maximum over pixels of its alpha.

    With ``occlusion`` the composited contribution ``alpha * transmittance``
    is used, so primitives hidden behind others count as unobserved.
    """
    out = np.zeros(len(scene))
    order = _visible_order(scene.mu, cam)
    if len(order) == 0:
        return out
    sub = scene.subset(order)
    u, v = pixel_grid(cam.width, cam.height)
    t = scene_tensors(sub)
    a = _alphas_t(t["mu"], t["scale"], t["quat"], t["sigma"], cam, u.ravel(), v.ravel()).data
    if occlusion:
        trans = np.exp(np.concatenate([np.zeros((1, a.shape[1])), np.cumsum(np.log1p(-a), axis=0)[:-1]]))
        a = a * trans
    out[order] = a.max(axis=1)
    return out


# ---------------------------------------------------------------------------
# synthetic scenes


def random_quats(rng, n):
    q = rng.normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def wall_primitives(extent, colors):
    """Six large flat Gaussians boxing in the content at +-1.95 extent."""
    d = WALL_FACTOR * extent
    big, thin = 1.6 * extent, 0.02 * extent
    mus, scales = [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            mu = np.zeros(3)
            mu[axis] = sign * d
            s = np.full(3, big)
            s[axis] = thin
            mus.append(mu)
            scales.append(s)
    n = len(mus)
    return Scene(np.array(mus), np.array(scales), np.tile([1.0, 0, 0, 0], (n, 1)), np.full(n, 0.95), colors, extent)


def gen_scene(rng: nc.Rng, n_primitives: int, extent=1.0) -> Scene:
    """Random content in the box [-0.45 extent, 0.45 extent]^3 plus six walls."""
    if n_primitives < 1:
        raise ValueError("need at least one primitive")
    n = n_primitives
    mu = rng.uniform((n, 3), -0.45 * extent, 0.45 * extent)
    scale = np.exp(rng.uniform((n, 3), np.log(0.04 * extent), np.log(0.15 * extent)))
    quat = random_quats(rng, n)
    sigma = rng.uniform(n, 0.3, 0.95)
    color = rng.uniform((n, 3))
    walls = wall_primitives(extent, rng.uniform((6, 3), 0.1, 0.9))
    return Scene(mu, scale, quat, sigma, color, extent).concat(walls)


def orbit_cameras(rng: nc.Rng, n, extent=1.0, size=32, focal=None, arc=None, radius=(1.0, 1.3), height=(-0.15, 0.15)):
    """Inward-facing look-at trajectory on a jittered circle around the y axis."""
    focal = size if focal is None else focal
    arc = rng.uniform((), 1.5 * np.pi, 2 * np.pi) if arc is None else arc
    start = rng.uniform((), 0, 2 * np.pi)
    cams = []
    for k in range(n):
        ang = start + arc * k / n
        r = extent * rng.uniform((), *radius)
        h = extent * rng.uniform((), *height)
        eye = np.array([r * np.cos(ang), h, r * np.sin(ang)])
        target = rng.uniform(3, -0.1 * extent, 0.1 * extent)
        cams.append(CameraPose(look_at(eye, target), eye, focal, focal, size / 2, size / 2, size, size))
    return cams


# ---------------------------------------------------------------------------
# degradation


def degrade(scene: Scene, input_cameras, rng: nc.Rng, params: DegradeParams = DegradeParams()) -> Scene:
    """Drop primitives no input camera sees, then jitter the survivors."""
    if len(input_cameras) == 0:
        raise ValueError("degrade needs at least one input camera")
    peak = np.max([peak_alpha(scene, c) for c in input_cameras], axis=0)
    keep = np.nonzero(peak >= params.tau_vis)[0]
    out = scene.subset(keep)
    noise = rng.normal(out.mu.shape)
    out.mu = out.mu + params.eta * scene.extent * noise
    factor = rng.uniform(len(out), 0.5, 1.0)
    if params.sigma_jitter:
        out.sigma = out.sigma * factor
    return out


# ---------------------------------------------------------------------------
# photometric fitting


def photometric_loss(t, frames):
    total = None
    for target, cam in frames:
        rgb, _, _ = render_tensors(t["mu"], nc.exp(t["log_scale"]), t["quat"], t["sigma"], t["color"], cam)
        err = ((rgb - np.asarray(target, dtype=rgb.dtype)) ** 2).mean()
        total = err if total is None else total + err
    return total / len(frames)


def fit_scene(frames, init: Scene, steps=200, lr=0.01, dtype=np.float64) -> FitResult:
    """Adam on the mean squared photometric error of ``frames``.

    ``frames`` is a list of (rgb (H,W,3), CameraPose). Scales are optimised in
    log space; quaternions are renormalised and opacity / colour clipped back
    into range after every step.
    """
    if len(frames) == 0:
        raise ValueError("fit_scene needs at least one frame")
    scene = init.copy()
    if steps <= 0 or len(scene) == 0:
        return FitResult(scene, [])
    params = {
        "mu": Tensor(scene.mu.astype(dtype), requires_grad=True),
        "log_scale": Tensor(np.log(scene.scale).astype(dtype), requires_grad=True),
        "quat": Tensor(scene.quat.astype(dtype), requires_grad=True),
        "sigma": Tensor(scene.sigma.astype(dtype), requires_grad=True),
        "color": Tensor(scene.color.astype(dtype), requires_grad=True),
    }
    opt = nc.AdamW(params, lr=lr)
    losses = []
    for step in range(steps):
        with nc.Tape() as tape:
            loss = photometric_loss(params, frames)
            if not np.isfinite(loss.data):
                raise nc.NonFiniteError(f"non-finite photometric loss at step {step}")
            losses.append(float(loss.data))
            grads = tape.backward(loss)
        opt.step(grads)
        q = params["quat"].data
        params["quat"].data = q / np.linalg.norm(q, axis=1, keepdims=True)
        params["sigma"].data = np.clip(params["sigma"].data, 1e-3, 1.0)
        params["color"].data = np.clip(params["color"].data, 0.0, 1.0)
    final = float(photometric_loss({k: Tensor(v.data) for k, v in params.items()}, frames).data)
    losses.append(final)
    log.info("fit_scene: loss %.6g -> %.6g over %d steps", losses[0], final, steps)
    out = Scene(
        params["mu"].data.astype(np.float64),
        np.exp(params["log_scale"].data.astype(np.float64)),
        params["quat"].data.astype(np.float64),
        params["sigma"].data.astype(np.float64),
        params["color"].data.astype(np.float64),
        init.extent,
    )
    return FitResult(out, losses)


# ---------------------------------------------------------------------------
# files


def save_scene(path, scene: Scene):
    Path(path).write_text(json.dumps([p.to_dict() for p in scene.primitives], indent=1) + "\n")


def load_scene(path, extent=1.0) -> Scene:
    data = json.loads(Path(path).read_text())
    prims = [
        GaussianPrimitive(np.array(d["mu"], float), np.array(d["scale"], float), np.array(d["quat"], float), float(d["sigma"]), np.array(d["c"], float))
        for d in data
    ]
    return Scene.from_primitives(prims, extent)
