"""Rays, pinhole cameras, and the three-view turntable rig."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "GROUND_CLIP_Z",
    "Ray",
    "Camera",
    "RayGrid",
    "ray_at",
    "pinhole_rays",
    "rig_views",
]

# Rays that descend are cut short at this height so nothing is queried far
# below the ground plane.
GROUND_CLIP_Z = -0.1

_UNIT_TOL = 1e-9


def _vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


@dataclass(frozen=True)
class Ray:
    """Half-line ``origin + t * direction`` integrated over t in [0, t_far]."""

    origin: np.ndarray
    direction: np.ndarray
    t_far: float

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin, "origin"))
        d = _vec3(self.direction, "direction")
        if abs(np.linalg.norm(d) - 1.0) > _UNIT_TOL:
            raise ValueError("ray direction must be unit length")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "t_far", float(self.t_far))
        if not self.t_far > 0:
            raise ValueError("t_far must be positive")

    @classmethod
    def towards(cls, origin, target, t_far: float) -> "Ray":
        """Ray from ``origin`` through ``target`` (direction normalized here)."""
        o = _vec3(origin, "origin")
        d = _vec3(target, "target") - o
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("target coincides with origin")
        return cls(o, d / n, t_far)


def ray_at(ray: Ray, t) -> np.ndarray:
    """Point(s) on the ray at parameter ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=np.float64)
    return ray.origin + t[..., None] * ray.direction if t.ndim else ray.origin + t * ray.direction


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with square pixels; ``vertical_fov`` is in radians."""

    position: np.ndarray
    look_at: np.ndarray
    width: int
    height: int
    vertical_fov: float = 0.8552
    up: np.ndarray = (0.0, 0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "look_at", _vec3(self.look_at, "look_at"))
        object.__setattr__(self, "up", _vec3(self.up, "up"))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "vertical_fov", float(self.vertical_fov))
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if not 0.0 < self.vertical_fov < math.pi:
            raise ValueError("vertical_fov must lie in (0, pi)")
        if np.allclose(self.position, self.look_at):
            raise ValueError("camera position coincides with look_at")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (forward, right, up) frame; raises if up is degenerate."""
        forward = self.look_at - self.position
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, self.up)
        n = np.linalg.norm(right)
        if n < 1e-12:
            raise ValueError("up vector is parallel to the view direction")
        right = right / n
        cam_up = np.cross(right, forward)
        return forward, right, cam_up


@dataclass(frozen=True)
class RayGrid:
    """Row-major bundle of camera rays with per-ray cutoffs.

    ``origins``/``directions`` are (N, 3), ``t_fars`` is (N,), ``shape`` is
    (height, width) with N = height * width.
    """

    origins: np.ndarray
    directions: np.ndarray
    t_fars: np.ndarray
    shape: tuple[int, int]

    def __len__(self) -> int:
        return self.origins.shape[0]

    def ray(self, index: int) -> Ray:
        return Ray(self.origins[index], self.directions[index], float(self.t_fars[index]))

    def __iter__(self):
        return (self.ray(i) for i in range(len(self)))


def pinhole_rays(camera: Camera, t_far: float, clip_z: float | None = GROUND_CLIP_Z) -> RayGrid:
    """One ray per pixel center, row-major.

    Descending rays get their cutoff shortened to the point where they reach
    height ``clip_z`` (pass None to disable the clip).
    """
    if not t_far > 0:
        raise ValueError("t_far must be positive")
    forward, right, cam_up = camera.basis()
    h, w = camera.height, camera.width
    tan_v = math.tan(camera.vertical_fov / 2.0)
    tan_h = tan_v * w / h

    cols = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    rows = 1.0 - (np.arange(h) + 0.5) / h * 2.0
    x = np.tile(cols, h) * tan_h
    y = np.repeat(rows, w) * tan_v
    dirs = forward[None, :] + x[:, None] * right[None, :] + y[:, None] * cam_up[None, :]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    n = h * w
    origins = np.broadcast_to(camera.position, (n, 3)).copy()
    t_fars = np.full(n, float(t_far))
    if clip_z is not None:
        dz = dirs[:, 2]
        descending = dz < 0.0
        with np.errstate(divide="ignore"):
            t_clip = (camera.position[2] - clip_z) / np.where(descending, -dz, 1.0)
        t_clip = np.where(descending & (t_clip > 0.0), t_clip, np.inf)
        t_fars = np.maximum(np.minimum(t_fars, t_clip), 1e-6)
    return RayGrid(origins, dirs, t_fars, (h, w))


def rig_views(base: Camera) -> tuple[Camera, Camera, Camera]:
    """Three cameras: the base plus copies rotated 120 and 240 degrees about world z."""
    views = [base]
    for k in (1, 2):
        ang = 2.0 * math.pi * k / 3.0
        c, s = math.cos(ang), math.sin(ang)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        views.append(replace(base, position=rot @ base.position))
    return tuple(views)
