"""Rotary positional encoding: frequency plans, phases, exact rotations.

Coefficients are (cos, sin) pairs stored as arrays of shape (D/2, 2),
one pair per frequency slot; the block-diagonal rotation matrix is never
materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CoordinateGroup",
    "FrequencyPlan",
    "make_frequency_plan",
    "rope_phases",
    "exact_rotation",
    "apply_coefficients",
]


@dataclass(frozen=True)
class CoordinateGroup:
    """Channel group driven by one scalar coordinate."""

    coordinate_index: int
    frequencies: np.ndarray
    channel_offset: int

    def __post_init__(self) -> None:
        f = np.asarray(self.frequencies, dtype=float)
        if f.ndim != 1 or f.size == 0:
            raise ValueError("frequencies must be a non-empty 1-d array")
        if not np.all(np.isfinite(f)) or np.any(f <= 0):
            raise ValueError("frequencies must be positive finite reals")
        if f.size > 1 and not np.all(np.diff(f) < 0):
            raise ValueError("frequencies must be strictly decreasing within a group")
        object.__setattr__(self, "frequencies", f)

    @property
    def num_channels(self) -> int:
        return 2 * self.frequencies.size

    @property
    def pair_offset(self) -> int:
        return self.channel_offset // 2


@dataclass(frozen=True)
class FrequencyPlan:
    """Assignment of (cos, sin) channel pairs to coordinates and frequencies."""

    coordinate_groups: tuple
    total_dim: int

    def __post_init__(self) -> None:
        groups = tuple(self.coordinate_groups)
        if self.total_dim <= 0 or self.total_dim % 2 != 0:
            raise ValueError(f"total_dim must be a positive even integer, got {self.total_dim}")
        covered = []
        for g in groups:
            if g.channel_offset % 2 != 0:
                raise ValueError("channel offsets must be even")
            covered.append((g.channel_offset, g.channel_offset + g.num_channels))
        covered.sort()
        cursor = 0
        for lo, hi in covered:
            if lo != cursor:
                raise ValueError("channel ranges must be disjoint and cover total_dim exactly")
            cursor = hi
        if cursor != self.total_dim:
            raise ValueError("channel ranges must cover total_dim exactly")
        object.__setattr__(self, "coordinate_groups", groups)

    @property
    def num_pairs(self) -> int:
        return self.total_dim // 2

    @property
    def num_coordinates(self) -> int:
        return len(self.coordinate_groups)


def make_frequency_plan(total_dim: int, num_coordinates: int, base: float = 10000.0) -> FrequencyPlan:
    """Split total_dim channels evenly over coordinates with a geometric
    frequency ladder base**(-2(f-1)/D_c) per coordinate."""
    if num_coordinates < 1:
        raise ValueError("need at least one coordinate")
    if total_dim % (2 * num_coordinates) != 0:
        raise ValueError(
            f"total_dim={total_dim} is not divisible by 2*num_coordinates={2 * num_coordinates}"
        )
    if not (np.isfinite(base) and base > 1.0):
        raise ValueError(f"frequency base must exceed 1, got {base}")
    dim_per_coord = total_dim // num_coordinates
    f = np.arange(dim_per_coord // 2, dtype=float)
    freqs = base ** (-2.0 * f / dim_per_coord)
    groups = tuple(
        CoordinateGroup(coordinate_index=c, frequencies=freqs.copy(), channel_offset=c * dim_per_coord)
        for c in range(num_coordinates)
    )
    return FrequencyPlan(coordinate_groups=groups, total_dim=total_dim)


def rope_phases(plan: FrequencyPlan, coords: np.ndarray) -> np.ndarray:
    """Phases omega_f * x_c, one per channel pair, in plan slot order."""
    x = np.asarray(coords, dtype=float)
    if x.shape != (plan.num_coordinates,):
        raise ValueError(f"expected {plan.num_coordinates} coordinates, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("coordinates must be finite")
    phases = np.empty(plan.num_pairs, dtype=float)
    for g in plan.coordinate_groups:
        p = g.pair_offset
        phases[p : p + g.frequencies.size] = g.frequencies * x[g.coordinate_index]
    return phases


def exact_rotation(phases: np.ndarray) -> np.ndarray:
    """Unit-magnitude (cos, sin) pairs, shape (..., 2)."""
    th = np.asarray(phases, dtype=float)
    if not np.all(np.isfinite(th)):
        raise ValueError("phases must be finite")
    return np.stack([np.cos(th), np.sin(th)], axis=-1)


def apply_coefficients(vec: np.ndarray, coeffs: np.ndarray, plan: FrequencyPlan) -> np.ndarray:
    """Apply per-pair (c, s) coefficients to adjacent channel pairs of vec.

    Each pair (a, b) maps to (c*a - s*b, s*a + c*b); unit-magnitude
    coefficients rotate, smaller magnitudes shrink the pair conformally.
    """
    v = np.asarray(vec, dtype=float)
    cf = np.asarray(coeffs, dtype=float)
    if v.shape[-1] != plan.total_dim:
        raise ValueError(f"vector dim {v.shape[-1]} does not match plan dim {plan.total_dim}")
    if cf.shape[-2:] != (plan.num_pairs, 2):
        raise ValueError(f"coefficients must have shape (..., {plan.num_pairs}, 2)")
    a = v[..., 0::2]
    b = v[..., 1::2]
    c = cf[..., 0]
    s = cf[..., 1]
    out = np.empty_like(v)
    out[..., 0::2] = c * a - s * b
    out[..., 1::2] = s * a + c * b
    return out
