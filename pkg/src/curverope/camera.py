"""Unified Camera Model geometry: projection, unprojection, rigid transforms.

Conventions: right-handed camera frame with +Z forward, +X right, +Y down;
pixel origin at the top-left corner with pixel centers at integer + 0.5.
Poses are stored camera-to-world.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BETA_EPS",
    "UcmCamera",
    "RigidTransform",
    "Ray",
    "ucm_project",
    "ucm_unproject",
    "project_points",
    "unproject_points",
    "relative_transform",
    "lift_point",
]

# Projection denominator guard; sign-preserving (see project_points).
BETA_EPS = 1e-8
_ROTATION_TOL = 1e-9
_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class UcmCamera:
    """Central camera with focal lengths, principal point and distortion xi.

    xi = 0 is exactly the pinhole model; xi in (0, 1] covers wide-angle
    and fisheye lenses. Values outside [0, 1] are rejected.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    xi: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.fx) and np.isfinite(self.fy)):
            raise ValueError("focal lengths must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")
        if not (np.isfinite(self.xi) and 0.0 <= self.xi <= 1.0):
            raise ValueError(f"xi must be in [0, 1], got {self.xi}")

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.cx, self.cy], dtype=float)


@dataclass(frozen=True)
class Ray:
    """Unit viewing direction in the camera frame.

    Directions with a non-positive z component only arise from cameras with
    xi > 0 (the model admits rays behind the pinhole plane).
    """

    direction: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or not np.all(np.isfinite(d)):
            raise ValueError("ray direction must be a finite 3-vector")
        if abs(np.linalg.norm(d) - 1.0) > _UNIT_TOL:
            raise ValueError(f"ray direction must be unit norm, got |d|={np.linalg.norm(d)!r}")
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; maps points of one frame into another."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ROTATION_TOL:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > _ROTATION_TOL:
            raise ValueError("rotation determinant must be +1 within 1e-9")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def unproject_points(cam: UcmCamera, pixels: np.ndarray) -> np.ndarray:
    """Map pixel coordinates (..., 2) to unit ray directions (..., 3)."""
    px = np.asarray(pixels, dtype=float)
    if px.shape[-1] != 2:
        raise ValueError("pixels must have shape (..., 2)")
    if not np.all(np.isfinite(px)):
        raise ValueError("pixel coordinates must be finite")
    x = (px[..., 0] - cam.cx) / cam.fx
    y = (px[..., 1] - cam.cy) / cam.fy
    rho2 = x * x + y * y
    gamma = (cam.xi + np.sqrt(1.0 + (1.0 - cam.xi * cam.xi) * rho2)) / (1.0 + rho2)
    vec = np.stack([gamma * x, gamma * y, gamma - cam.xi], axis=-1)
    return vec / np.linalg.norm(vec, axis=-1, keepdims=True)


def project_points(cam: UcmCamera, points: np.ndarray) -> np.ndarray:
    """Map camera-frame points (..., 3) to pixel coordinates (..., 2).

    The denominator Z + xi*|X| is clamped away from zero preserving its
    sign, so projection is total; callers decide validity.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != 3:
        raise ValueError("points must have shape (..., 3)")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    norm = np.linalg.norm(pts, axis=-1)
    if np.any(norm == 0.0):
        raise ValueError("cannot project a zero-norm point")
    beta = pts[..., 2] + cam.xi * norm
    beta = np.where(beta >= 0.0, np.maximum(beta, BETA_EPS), np.minimum(beta, -BETA_EPS))
    u = cam.fx * pts[..., 0] / beta + cam.cx
    v = cam.fy * pts[..., 1] / beta + cam.cy
    return np.stack([u, v], axis=-1)


def ucm_unproject(cam: UcmCamera, pixel: np.ndarray) -> Ray:
    """Unproject a single pixel to its unit viewing ray."""
    return Ray(unproject_points(cam, np.asarray(pixel, dtype=float).reshape(2)))


def ucm_project(cam: UcmCamera, point: np.ndarray) -> np.ndarray:
    """Project a single camera-frame point to pixel coordinates."""
    return project_points(cam, np.asarray(point, dtype=float).reshape(3))


def relative_transform(pose_source: RigidTransform, pose_query: RigidTransform) -> RigidTransform:
    """Transform from source-camera coordinates into query-camera coordinates.

    Both poses are camera-to-world; the result is inverse(pose_query)
    composed with pose_source.
    """
    rq = pose_query.rotation
    rel_rot = rq.T @ pose_source.rotation
    rel_t = rq.T @ (pose_source.translation - pose_query.translation)
    return RigidTransform(rel_rot, rel_t)


def lift_point(ray: Ray, r: float) -> np.ndarray:
    """Point at radial distance r along the ray; |result| == r."""
    if not (np.isfinite(r) and r > 0):
        raise ValueError(f"radial distance must be positive, got {r}")
    return r * ray.direction
