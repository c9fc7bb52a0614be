"""Pinhole cameras, rotation distances and Plücker ray maps.

Poses are world-from-camera: ``R`` maps camera-frame directions to the world
and ``t`` is the camera centre in world units. Pixel ``(u, v)`` has its
centre at ``(u + 0.5, v + 0.5)``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

ROT_TOL = 1e-9


class PoseError(ValueError):
    pass


@dataclass(frozen=True)
class CameraPose:
    R: np.ndarray
    t: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))
        check_rotation(self.R)
        if self.width < 1 or self.height < 1:
            raise PoseError(f"image extents must be >= 1, got {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise PoseError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def center(self):
        return self.t

    def world_to_camera(self, x):
        return (np.asarray(x) - self.t) @ self.R

    def to_dict(self):
        return {
            "R": [float(v) for v in self.R.ravel()],
            "t": [float(v) for v in self.t],
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            R=np.asarray(d["R"], dtype=np.float64).reshape(3, 3),
            t=np.asarray(d["t"], dtype=np.float64),
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )

    def translated(self, delta):
        return CameraPose(self.R, self.t + np.asarray(delta), self.fx, self.fy, self.cx, self.cy, self.width, self.height)


def check_rotation(R):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise PoseError(f"rotation must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise PoseError("rotation has non-finite entries")
    if np.abs(R.T @ R - np.eye(3)).max() > ROT_TOL or abs(np.linalg.det(R) - 1) > ROT_TOL:
        raise PoseError("matrix is not a proper rotation (R^T R = I, det R = +1)")
    return R


def so3_geodesic(Ri, Rj):
    """Angle in [0, pi] of the relative rotation ``Ri^T Rj``.

    Equals arccos((tr(Ri^T Rj) - 1) / 2) but is evaluated with atan2 over the
    symmetric and skew parts, which stays accurate near 0 and pi.
    """
    check_rotation(Ri)
    check_rotation(Rj)
    M = np.asarray(Ri).T @ np.asarray(Rj)
    skew = np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    return float(np.arctan2(np.linalg.norm(skew), np.trace(M) - 1.0))


def mean_radius(poses):
    """Mean L2 norm of the camera centres."""
    if len(poses) == 0:
        raise PoseError("mean_radius needs at least one pose")
    return float(np.mean([np.linalg.norm(p.t) for p in poses]))


def pose_distance(Pi, Pj, lambda_t=1.0, rbar=1.0):
    """Rotation angle / pi plus ``lambda_t`` times centre distance / ``rbar``."""
    if not rbar > 0:
        raise PoseError(f"mean radius must be positive, got {rbar}")
    return so3_geodesic(Pi.R, Pj.R) / np.pi + lambda_t * float(np.linalg.norm(Pi.t - Pj.t)) / rbar


def frobenius_distance(Pi, Pj):
    """Unnormalised variant: ||Ri - Rj||_F + ||ti - tj||_2."""
    return float(np.linalg.norm(Pi.R - Pj.R) + np.linalg.norm(Pi.t - Pj.t))


def make_distance(poses, lambda_t=1.0, frobenius=False):
    """Distance callable over a fixed pose list.

    With every camera at the origin the mean radius is 0; the translation
    term is then normalised by 1 instead and a warning is logged.
    """
    if frobenius:
        return frobenius_distance
    rbar = mean_radius(poses)
    if rbar <= 0:
        log.warning("all cameras at the origin; using unit mean radius")
        rbar = 1.0

    def dist(Pi, Pj):
        return pose_distance(Pi, Pj, lambda_t, rbar)

    return dist


def pixel_grid(width, height):
    """Pixel-centre coordinates, each of shape (H, W)."""
    u, v = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
    return u, v


def plucker_raymap(P: CameraPose):
    """(H, W, 6) array of unit world directions and moments ``t x d``."""
    u, v = pixel_grid(P.width, P.height)
    dirs = np.stack([(u - P.cx) / P.fx, (v - P.cy) / P.fy, np.ones_like(u)], axis=-1)
    d = dirs @ P.R.T
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    m = np.cross(np.broadcast_to(P.t, d.shape), d)
    return np.concatenate([d, m], axis=-1)


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-from-camera rotation for a camera at ``eye`` looking at ``target``.

    Camera axes: +z forward, +x right, +y down (image rows grow downwards).
    """
    eye, target, up = (np.asarray(a, dtype=np.float64) for a in (eye, target, up))
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, [1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd], axis=1)
    # re-orthonormalise to keep the rotation invariants at 1e-9
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


def relative_pose(target: CameraPose, ref: CameraPose):
    """Reference-from-target rigid transform as (3x3 rotation, 3 translation)."""
    R = ref.R.T @ target.R
    t = ref.R.T @ (target.t - ref.t)
    return R, t


def save_manifest(path, poses):
    Path(path).write_text(json.dumps([p.to_dict() for p in poses], indent=1) + "\n")


def load_manifest(path):
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list):
        raise PoseError("pose manifest must be a JSON array")
    return [CameraPose.from_dict(d) for d in data]
