"""Expected rotary modulation along curved projected ray paths.

A token's radial position is a uniform distribution over log radial
distance. The interval is discretized into breakpoints, lifted along the
source ray, transported to the query camera and projected; the rotary
phasor is integrated analytically over each piecewise-linear phase
segment. The resulting per-frequency (cos, sin) coefficients have
magnitude <= 1 and replace exact RoPE rotations on the key side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import BETA_EPS, Ray, RigidTransform, UcmCamera, unproject_points
from .rope import FrequencyPlan

__all__ = [
    "LOG_RANGE_BOUND",
    "SMALL_PHASE",
    "PATCH_OFFSETS",
    "RadialInterval",
    "PatchRays",
    "ProjectedPath",
    "breakpoints",
    "projected_path",
    "segment_phasor",
    "expected_phasor",
    "patch_rays",
    "token_paths",
    "coefficients_from_paths",
    "expected_coefficients",
]

# Bound on log normalized radial distance; exp(+-3) ~ [0.05, 20].
LOG_RANGE_BOUND = 3.0
# Below this phase difference the segment integral uses its midpoint limit.
SMALL_PHASE = 1e-6
# Fixed relative sub-patch positions for the three offset rays.
PATCH_OFFSETS = np.array([[0.5, 0.5], [0.25, 0.25], [0.75, 0.75]])


@dataclass(frozen=True)
class RadialInterval:
    """Uniform distribution over log radial distance: center mu, half-width |sigma|."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma)):
            raise ValueError("interval parameters must be finite")

    @property
    def half_width(self) -> float:
        return abs(self.sigma)

    def clamp(self, bound: float = LOG_RANGE_BOUND) -> "RadialInterval":
        """Clamp mu to [-bound, bound] and cap |sigma| so the interval fits."""
        mu = float(np.clip(self.mu, -bound, bound))
        width = min(abs(self.sigma), bound - abs(mu))
        return RadialInterval(mu, float(np.copysign(width, self.sigma)))


@dataclass(frozen=True)
class PatchRays:
    """Offset rays of one token: sub-patch pixel positions and unit directions."""

    offsets: np.ndarray
    rays: np.ndarray

    def __post_init__(self) -> None:
        off = np.asarray(self.offsets, dtype=float)
        rays = np.asarray(self.rays, dtype=float)
        if off.shape != (3, 2) or rays.shape != (3, 3):
            raise ValueError("expected 3 offsets (3, 2) and 3 rays (3, 3)")
        if np.max(np.abs(np.linalg.norm(rays, axis=1) - 1.0)) > 1e-12:
            raise ValueError("offset rays must be unit norm")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "rays", rays)

    def __len__(self) -> int:
        return self.rays.shape[0]


@dataclass(frozen=True)
class ProjectedPath:
    """Query-view coordinates of the lifted breakpoints.

    points[k] = (u_bounded, v_bounded, range) where (u, v) lie in the
    closed unit disk and range is the query-frame radial distance.
    """

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        val = np.asarray(self.valid, dtype=bool)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValueError("path needs at least 2 points of shape (K, 3)")
        if val.shape != (pts.shape[0],):
            raise ValueError("validity mask must match the number of points")
        disk = pts[:, 0] ** 2 + pts[:, 1] ** 2
        if np.any(disk > 1.0 + 1e-12):
            raise ValueError("bounded coordinates must lie in the closed unit disk")
        if np.any(val & ~(pts[:, 2] > 0)):
            raise ValueError("valid points must have positive range")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "valid", val)

    @property
    def num_points(self) -> int:
        return self.points.shape[0]


def breakpoints(interval: RadialInterval, k: int) -> np.ndarray:
    """K radial distances exp(z_k) at uniformly spaced z over the interval."""
    if k < 2:
        raise ValueError(f"need at least 2 breakpoints, got {k}")
    a = interval.half_width
    z = interval.mu - a + (np.arange(k, dtype=float) / (k - 1)) * (2.0 * a)
    return np.exp(z)


def projected_path(
    cam_q: UcmCamera,
    transform: RigidTransform,
    ray: Ray,
    radii: np.ndarray,
) -> ProjectedPath:
    """Lift radii along the source ray, move to the query frame and project.

    A point is flagged invalid when the query camera is pinhole (xi = 0)
    and the point sits at or behind its principal plane, or when the
    projection denominator is smaller than the guard; projection itself
    stays total.
    """
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("radii must be a 1-d array with at least 2 entries")
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise ValueError("radii must be positive finite reals")
    if np.any(np.diff(r) < 0):
        raise ValueError("radii must be non-decreasing")

    pts = transform.apply(r[:, None] * ray.direction)
    rng = np.linalg.norm(pts, axis=1)
    z = pts[:, 2]
    beta = z + cam_q.xi * rng
    invalid = np.abs(beta) < BETA_EPS
    if cam_q.xi == 0.0:
        invalid |= z <= 0.0
    beta = np.where(beta >= 0.0, np.maximum(beta, BETA_EPS), np.minimum(beta, -BETA_EPS))
    ub = (cam_q.fx / cam_q.width) * pts[:, 0] / beta
    vb = (cam_q.fy / cam_q.height) * pts[:, 1] / beta
    denom = np.sqrt(ub * ub + vb * vb + 1.0)
    points = np.stack([ub / denom, vb / denom, rng], axis=1)
    return ProjectedPath(points=points, valid=~invalid)


def segment_phasor(theta_a, theta_b) -> np.ndarray:
    """Mean of (cos, sin) over a linear phase segment, shape (..., 2).

    Small phase differences take the midpoint limit to avoid cancellation;
    the switch is continuous to well below the branch threshold.
    """
    ta = np.asarray(theta_a, dtype=float)
    tb = np.asarray(theta_b, dtype=float)
    if not (np.all(np.isfinite(ta)) and np.all(np.isfinite(tb))):
        raise ValueError("phases must be finite")
    d = tb - ta
    small = np.abs(d) < SMALL_PHASE
    d_safe = np.where(small, 1.0, d)
    mid = 0.5 * (ta + tb)
    c = np.where(small, np.cos(mid), (np.sin(tb) - np.sin(ta)) / d_safe)
    s = np.where(small, np.sin(mid), (np.cos(ta) - np.cos(tb)) / d_safe)
    return np.stack([c, s], axis=-1)


def expected_phasor(phases: np.ndarray) -> np.ndarray:
    """Mean of the segment phasors over consecutive phases, shape (..., 2).

    With two phases this reduces to the single-segment endpoint value;
    the magnitude is always <= 1.
    """
    th = np.asarray(phases, dtype=float)
    if th.shape[-1] < 2:
        raise ValueError("need at least 2 phases along the last axis")
    pairs = segment_phasor(th[..., :-1], th[..., 1:])
    return pairs.mean(axis=-2)


def patch_rays(cam_s: UcmCamera, token_index, patch_size: int) -> PatchRays:
    """Three offset rays sampled at fixed sub-patch positions of one token."""
    if patch_size < 1:
        raise ValueError("patch_size must be >= 1")
    row, col = token_index
    rows = cam_s.height // patch_size
    cols = cam_s.width // patch_size
    if not (0 <= row < rows and 0 <= col < cols):
        raise ValueError(f"token {token_index} outside the {rows}x{cols} token grid")
    pixels = np.stack(
        [(col + PATCH_OFFSETS[:, 0]) * patch_size, (row + PATCH_OFFSETS[:, 1]) * patch_size],
        axis=1,
    )
    return PatchRays(offsets=pixels, rays=unproject_points(cam_s, pixels))


def token_paths(
    cam_q: UcmCamera,
    transform: RigidTransform,
    patch: PatchRays,
    radii: np.ndarray,
) -> list:
    """One projected path per offset ray of the token."""
    return [projected_path(cam_q, transform, Ray(d), radii) for d in patch.rays]


def coefficients_from_paths(paths, plan: FrequencyPlan):
    """Expected coefficients from per-offset paths, plus the fallback count.

    Invalid breakpoints are dropped and segments formed from consecutive
    valid points; an offset whose path keeps fewer than two valid points
    falls back to identity coefficients (1, 0) on its channels.
    """
    num_offsets = len(paths)
    if plan.num_coordinates != 3 * num_offsets:
        raise ValueError(
            f"plan has {plan.num_coordinates} coordinate groups, expected {3 * num_offsets}"
        )
    coeffs = np.empty((plan.num_pairs, 2), dtype=float)
    fallbacks = 0
    for a, path in enumerate(paths):
        pts = path.points[path.valid]
        if pts.shape[0] < 2:
            fallbacks += 1
        for c, group in enumerate(plan.coordinate_groups[3 * a : 3 * a + 3]):
            p = group.pair_offset
            n = group.frequencies.size
            if pts.shape[0] < 2:
                coeffs[p : p + n] = [1.0, 0.0]
            else:
                phases = group.frequencies[:, None] * pts[None, :, c]
                coeffs[p : p + n] = expected_phasor(phases)
    return coeffs, fallbacks


def expected_coefficients(
    cam_q: UcmCamera,
    transform: RigidTransform,
    patch: PatchRays,
    interval: RadialInterval,
    plan: FrequencyPlan,
    k: int,
) -> np.ndarray:
    """Expected modulation coefficients for one token, shape (D/2, 2).

    The plan must carry three coordinate groups (u_bounded, v_bounded,
    range) per offset ray, in that order per offset.
    """
    paths = token_paths(cam_q, transform, patch, breakpoints(interval, k))
    coeffs, _ = coefficients_from_paths(paths, plan)
    return coeffs
