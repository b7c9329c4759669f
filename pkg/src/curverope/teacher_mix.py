"""Scheduled teacher substitution for the radial-interval pathway.

During training, valid pseudo targets stochastically replace predicted
intervals with a narrow teacher interval; the substitution probability
decays from 1.0 to a mode-dependent floor. Invalid targets never inject
teacher geometry. The same rule serves external radial maps at inference.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .phasor import LOG_RANGE_BOUND, RadialInterval
from .supervision import RadialMap, normalize_and_pool, validity_mask

__all__ = [
    "BLOCK_FRAME",
    "VIDEO",
    "TEACHER_SIGMA",
    "MixSchedule",
    "TeacherMixState",
    "substitution_probability",
    "sample_mask",
    "effective_interval",
    "external_override",
    "OverrideResult",
]

BLOCK_FRAME = "block_frame"
VIDEO = "video"
_MODE_FLOORS = {BLOCK_FRAME: 0.1, VIDEO: 0.5}
TEACHER_SIGMA = 0.1


@dataclass(frozen=True)
class MixSchedule:
    """Piecewise-linear substitution-probability schedule.

    Full substitution up to decay_start, linear decay to the floor at
    decay_end, constant after. Granularity: block_frame draws one mask bit
    per frame (floor 0.1), video one bit per clip (floor 0.5).
    """

    mode: str
    decay_start: int = 1000
    decay_end: int = 7000
    floor: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in _MODE_FLOORS:
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.floor is None:
            object.__setattr__(self, "floor", _MODE_FLOORS[self.mode])
        if not (0.0 <= self.floor <= 1.0):
            raise ValueError(f"floor must lie in [0, 1], got {self.floor}")
        if self.decay_start >= self.decay_end:
            raise ValueError("decay_start must precede decay_end")


def substitution_probability(schedule: MixSchedule, step: int) -> float:
    """Substitution probability at a training step.

    The interpolation runs in exact rational arithmetic (treating the
    floor as its decimal value) so the schedule lands on exact decimals at
    round fractions of the decay window.
    """
    if step <= schedule.decay_start:
        return 1.0
    if step >= schedule.decay_end:
        return float(schedule.floor)
    t = Fraction(step - schedule.decay_start, schedule.decay_end - schedule.decay_start)
    floor = Fraction(str(schedule.floor))
    return float(1 - t * (1 - floor))


def sample_mask(p: float, granules: int, seed) -> np.ndarray:
    """Independent Bernoulli(p) mask; deterministic under a fixed seed
    (an int or a sequence of ints)."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    if granules < 0:
        raise ValueError("granule count must be non-negative")
    rng = np.random.default_rng(seed)
    return rng.random(granules) < p


@dataclass(frozen=True)
class TeacherMixState:
    """Per-forward-pass substitution state, shared across all layer slots."""

    step: int
    mask: np.ndarray
    teacher_sigma: float = TEACHER_SIGMA

    @classmethod
    def sample(cls, schedule: MixSchedule, step: int, granules: int, seed: int) -> "TeacherMixState":
        p = substitution_probability(schedule, step)
        return cls(step=step, mask=sample_mask(p, granules, seed))


def _teacher_interval(log_target: float, teacher_sigma: float) -> RadialInterval:
    # Out-of-range teachers are clamped into the head's log bound so the
    # interval invariants hold downstream.
    return RadialInterval(log_target, abs(teacher_sigma)).clamp()


def effective_interval(
    pred: RadialInterval,
    gt_normalized: float | None,
    substituted: bool,
    valid: bool,
    teacher_sigma: float = TEACHER_SIGMA,
) -> RadialInterval:
    """Teacher interval iff substituted-and-valid, else the prediction."""
    if valid:
        if gt_normalized is None or not (np.isfinite(gt_normalized) and gt_normalized > 0):
            raise ValueError("a valid target requires a finite positive normalized value")
    if substituted and valid:
        return _teacher_interval(float(np.log(gt_normalized)), teacher_sigma)
    return pred


@dataclass
class OverrideResult:
    """Effective interval grids and which tokens took the teacher."""

    mu: np.ndarray
    sigma: np.ndarray
    substituted: np.ndarray


def external_override(
    pred_mu: np.ndarray,
    pred_sigma: np.ndarray,
    external: RadialMap,
    near_stat: float,
    r_max: float = 20.0,
    teacher_sigma: float = TEACHER_SIGMA,
) -> OverrideResult:
    """Replace predictions with teacher intervals where an external radial
    map is valid after filtering, normalization and token pooling; invalid
    or missing tokens keep the prediction."""
    pred_mu = np.asarray(pred_mu, dtype=float)
    pred_sigma = np.asarray(pred_sigma, dtype=float)
    if pred_mu.shape != pred_sigma.shape or pred_mu.ndim != 3:
        raise ValueError("prediction grids must share shape (frames, rows, cols)")
    f, ht, wt = pred_mu.shape
    ef, eh, ew = external.values.shape
    if ef != f or eh % ht != 0 or ew % wt != 0 or eh // ht != ew // wt:
        raise ValueError("external map shape is incompatible with the token grid")
    patch = eh // ht
    mask = validity_mask(external, r_max)
    tokens = normalize_and_pool(external, mask, near_stat, patch)
    log_t = np.log(np.where(tokens.mask, tokens.targets, 1.0))
    t_mu = np.clip(log_t, -LOG_RANGE_BOUND, LOG_RANGE_BOUND)
    t_sigma = np.minimum(abs(teacher_sigma), LOG_RANGE_BOUND - np.abs(t_mu))
    return OverrideResult(
        mu=np.where(tokens.mask, t_mu, pred_mu),
        sigma=np.where(tokens.mask, t_sigma, pred_sigma),
        substituted=tokens.mask.copy(),
    )
