"""Radial-distance supervision: validity filtering, per-clip normalization,
token pooling, the uncertainty-weighted loss and timestep gating.

Metric pseudo targets are filtered (never clipped) before normalization:
non-finite, non-positive, source-invalid or beyond-range values are
treated as unknown. Valid pixels are divided by a per-clip near-distance
statistic and mean-pooled onto the token grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phasor import RadialInterval

__all__ = [
    "NEAR_STAT_FLOOR",
    "RadialMap",
    "TokenTargets",
    "LossConfig",
    "RadialLossResult",
    "validity_mask",
    "near_distance_stat",
    "normalize_and_pool",
    "uncertainty_scale",
    "uncertainty_scale_arrays",
    "radial_loss",
    "timestep_gate",
]

NEAR_STAT_FLOOR = 0.1
_SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class RadialMap:
    """Per-frame pixel grid of metric radial distances with validity flags."""

    values: np.ndarray
    source_valid: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.source_valid, dtype=bool)
        if v.ndim != 3:
            raise ValueError("radial map values must have shape (frames, height, width)")
        if m.shape != v.shape:
            raise ValueError("validity mask shape must match values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "source_valid", m)

    @property
    def frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TokenTargets:
    """Normalized radial targets pooled to the token grid."""

    targets: np.ndarray
    mask: np.ndarray
    near_stat: float

    def __post_init__(self) -> None:
        t = np.asarray(self.targets, dtype=float)
        m = np.asarray(self.mask, dtype=bool)
        if t.shape != m.shape:
            raise ValueError("target and mask shapes must match")
        if self.near_stat < NEAR_STAT_FLOOR:
            raise ValueError(f"near_stat must be >= {NEAR_STAT_FLOOR}, got {self.near_stat}")
        if np.any(m & ~(np.isfinite(t) & (t > 0))):
            raise ValueError("masked-in targets must be finite and positive")
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True)
class LossConfig:
    """Loss knobs; lambda_rad is the weight a consumer applies when
    blending this loss with its main training objective."""

    alpha: float = 1.0
    lambda_rad: float = 1e-3
    s_floor_var: float = 1e-6
    s_ceiling: float = 10.0
    gate_fraction: float = 0.03
    r_max: float = 20.0

    def __post_init__(self) -> None:
        for name in ("alpha", "lambda_rad", "s_floor_var", "s_ceiling", "gate_fraction", "r_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class RadialLossResult:
    loss: float
    grad_mu: np.ndarray
    grad_sigma: np.ndarray
    num_valid: int
    empty: bool


def validity_mask(radial_map: RadialMap, r_max: float = 20.0) -> np.ndarray:
    """True where the source flag holds and the value is finite, positive
    and within range. Values above r_max are excluded, never clipped."""
    v = radial_map.values
    finite = np.isfinite(v)
    safe = np.where(finite, v, 0.0)
    return radial_map.source_valid & finite & (safe > 0.0) & (safe <= r_max)


def near_distance_stat(radial_map: RadialMap, mask: np.ndarray) -> float:
    """Nearest-rank 5th percentile of valid metric values, floored at 0.1 m."""
    vals = radial_map.values[np.asarray(mask, dtype=bool)]
    if vals.size == 0:
        return NEAR_STAT_FLOOR
    rank = max(1, int(np.ceil(0.05 * vals.size)))
    stat = float(np.sort(vals)[rank - 1])
    return max(stat, NEAR_STAT_FLOOR)


def normalize_and_pool(
    radial_map: RadialMap,
    mask: np.ndarray,
    near_stat: float,
    patch_size: int,
) -> TokenTargets:
    """Mean-pool normalized valid pixels onto the token grid.

    A token is valid when at least half of its patch pixels are valid.
    """
    f, h, w = radial_map.values.shape
    if patch_size < 1 or h % patch_size != 0 or w % patch_size != 0:
        raise ValueError(f"image size {h}x{w} is not divisible by patch_size={patch_size}")
    if near_stat < NEAR_STAT_FLOOR:
        raise ValueError(f"near_stat must be >= {NEAR_STAT_FLOOR}")
    m = np.asarray(mask, dtype=bool)
    if m.shape != radial_map.values.shape:
        raise ValueError("mask shape must match the radial map")
    ht, wt = h // patch_size, w // patch_size
    vals = np.where(m, radial_map.values, 0.0)
    vals = vals.reshape(f, ht, patch_size, wt, patch_size).sum(axis=(2, 4))
    counts = m.reshape(f, ht, patch_size, wt, patch_size).sum(axis=(2, 4))
    token_mask = 2 * counts >= patch_size * patch_size
    token_mask &= counts > 0
    targets = np.where(token_mask, vals / (np.maximum(counts, 1) * near_stat), 0.0)
    return TokenTargets(targets=targets, mask=token_mask, near_stat=float(near_stat))


def uncertainty_scale_arrays(
    mu: np.ndarray,
    sigma: np.ndarray,
    floor_var: float = 1e-6,
    ceiling: float = 10.0,
):
    """Uncertainty scale s per token plus flat-region flags.

    s is the standard deviation of a uniform distribution over
    [exp(mu-|sigma|), exp(mu+|sigma|)], floored via max(Var, floor_var)
    and capped at the ceiling. Returns (s, floored, ceiled).
    """
    a = np.abs(sigma)
    spread = np.exp(mu + a) - np.exp(mu - a)
    var = spread * spread / 12.0
    floored = var <= floor_var
    root = np.sqrt(np.maximum(var, floor_var))
    ceiled = root >= ceiling
    # sqrt(1e-6) is written as the exact literal 1e-3 to keep the floor crisp.
    floor_s = 1e-3 if floor_var == 1e-6 else float(np.sqrt(floor_var))
    s = np.where(floored, floor_s, np.where(ceiled, ceiling, root))
    return s, floored, ceiled


def uncertainty_scale(interval: RadialInterval, floor_var: float = 1e-6, ceiling: float = 10.0) -> float:
    """Scalar uncertainty scale for one clamped interval."""
    s, _, _ = uncertainty_scale_arrays(
        np.asarray(interval.mu), np.asarray(interval.sigma), floor_var, ceiling
    )
    return float(s)


def radial_loss(
    mu: np.ndarray,
    sigma: np.ndarray,
    targets: TokenTargets,
    config: LossConfig = LossConfig(),
) -> RadialLossResult:
    """Mean over valid tokens of |exp(mu) - target| / s + alpha * log s,
    with exact gradients for mu and sigma per token.

    The absolute value takes subgradient 0 at ties; the floor and ceiling
    of s are flat regions. An empty valid set yields loss 0, zero
    gradients and the empty flag.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.shape != targets.targets.shape or sigma.shape != mu.shape:
        raise ValueError("interval grids must match the target grid")
    mask = targets.mask
    n = int(mask.sum())
    if n == 0:
        return RadialLossResult(0.0, np.zeros_like(mu), np.zeros_like(mu), 0, True)

    r = np.exp(mu)
    diff = r - targets.targets
    adiff = np.abs(diff)
    sgn = np.sign(diff)
    s, floored, ceiled = uncertainty_scale_arrays(mu, sigma, config.s_floor_var, config.s_ceiling)
    active = ~(floored | ceiled)

    per_token = adiff / s + config.alpha * np.log(s)
    loss = float(per_token[mask].sum() / n)

    # Active region: s = exp(mu) sinh|sigma| / sqrt(3), so ds/dmu = s and
    # ds/dsigma = exp(mu) cosh|sigma| / sqrt(3) * sign(sigma).
    dl_ds = config.alpha / s - adiff / (s * s)
    g_mu = sgn * r / s + np.where(active, dl_ds * s, 0.0)
    ds_dsigma = np.exp(mu) * np.cosh(np.abs(sigma)) / _SQRT3 * np.sign(sigma)
    g_sigma = np.where(active, dl_ds * ds_dsigma, 0.0)

    g_mu = np.where(mask, g_mu / n, 0.0)
    g_sigma = np.where(mask, g_sigma / n, 0.0)
    return RadialLossResult(loss, g_mu, g_sigma, n, False)


def timestep_gate(t: float, gate_fraction: float = 0.03) -> bool:
    """True when the radial loss applies; the noisiest fraction is gated off.

    t is the diffusion timestep in [0, 1] with 1 the noisiest.
    """
    if not (np.isfinite(t) and 0.0 <= t <= 1.0):
        raise ValueError(f"timestep must lie in [0, 1], got {t}")
    return not (t > 1.0 - gate_fraction)
