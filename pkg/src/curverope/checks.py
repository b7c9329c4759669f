"""Finite-difference verification of the analytic gradients.

Central differences with a fixed step are compared against the analytic
backward passes at random points; configurations that land near a
non-smooth boundary (clamp edges, the |.| kink, the scale floor/ceiling)
are excluded and counted rather than failed.
"""

from __future__ import annotations

import numpy as np

from .head import head_backward, head_forward, head_init
from .phasor import LOG_RANGE_BOUND
from .supervision import LossConfig, TokenTargets, radial_loss

__all__ = ["run_head_gradcheck", "run_loss_gradcheck"]


def _relative_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = max(np.max(np.abs(fd)), np.max(np.abs(analytic)), 1e-8)
    return float(np.max(np.abs(analytic - fd)) / scale)


def run_head_gradcheck(
    samples: int,
    d_model: int,
    seed: int,
    step: float = 1e-5,
    boundary_margin: float = 1e-3,
) -> dict:
    """Check head gradients at random smooth points.

    Returns max relative error over accepted samples plus the count of
    excluded clamp-boundary configurations.
    """
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    excluded = 0
    accepted = 0
    attempts = 0
    while accepted < samples and attempts < 50 * samples:
        attempts += 1
        params = head_init(d_model, int(rng.integers(0, 2**31)))
        params.w2 = rng.normal(0.0, 0.1, size=params.w2.shape)
        params.b2 = np.array([rng.uniform(-2.0, 2.0), rng.uniform(0.3, 2.0)])
        feature = rng.normal(size=d_model)

        interval = head_forward(params, feature)
        mu, sigma = interval.mu, interval.sigma
        cap = LOG_RANGE_BOUND - abs(mu)
        near_boundary = (
            LOG_RANGE_BOUND - abs(mu) < boundary_margin
            or abs(abs(sigma) - cap) < boundary_margin
            or abs(sigma) < boundary_margin
        )
        if near_boundary:
            excluded += 1
            continue
        accepted += 1

        gmu, gsigma = rng.normal(size=2)
        grads = head_backward(params, feature, gmu, gsigma)

        def probe():
            iv = head_forward(params, feature)
            return gmu * iv.mu + gsigma * iv.sigma

        for name, analytic in grads.param_arrays():
            base = getattr(params, name)
            flat = base.reshape(-1)
            fd = np.empty_like(flat)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                up = probe()
                flat[j] = orig - step
                down = probe()
                flat[j] = orig
                fd[j] = (up - down) / (2 * step)
            max_rel = max(max_rel, _relative_error(analytic.reshape(-1), fd))

        fd = np.empty(d_model)
        for j in range(d_model):
            orig = feature[j]
            feature[j] = orig + step
            up = probe()
            feature[j] = orig - step
            down = probe()
            feature[j] = orig
            fd[j] = (up - down) / (2 * step)
        max_rel = max(max_rel, _relative_error(grads.feature, fd))
    return {
        "samples": accepted,
        "excluded": excluded,
        "max_relative_error": max_rel,
        "pass": accepted == samples and max_rel < 1e-4,
    }


def run_loss_gradcheck(
    samples: int,
    seed: int,
    step: float = 1e-5,
    config: LossConfig = LossConfig(),
) -> dict:
    """Check radial-loss gradients at random smooth points.

    Tokens near the |exp(mu) - target| kink or the scale floor/ceiling are
    flagged and skipped, not failed.
    """
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    flagged = 0
    accepted = 0
    attempts = 0
    while accepted < samples and attempts < 50 * samples:
        attempts += 1
        mu = rng.uniform(-1.5, 1.5)
        sigma = rng.uniform(0.05, 2.0)
        target = float(np.exp(rng.uniform(-1.5, 1.5)))

        spread = np.exp(mu + sigma) - np.exp(mu - sigma)
        var = spread * spread / 12.0
        s = np.sqrt(max(var, config.s_floor_var))
        smooth = (
            abs(np.exp(mu) - target) > 1e-3
            and abs(var - config.s_floor_var) > 1e-7
            and abs(s - config.s_ceiling) > 1e-3
        )
        if not smooth:
            flagged += 1
            continue
        accepted += 1

        targets = TokenTargets(
            targets=np.full((1, 1, 1), target), mask=np.ones((1, 1, 1), bool), near_stat=1.0
        )

        def loss_at(m, g):
            return radial_loss(
                np.full((1, 1, 1), m), np.full((1, 1, 1), g), targets, config
            ).loss

        res = radial_loss(np.full((1, 1, 1), mu), np.full((1, 1, 1), sigma), targets, config)
        fd_mu = (loss_at(mu + step, sigma) - loss_at(mu - step, sigma)) / (2 * step)
        fd_sigma = (loss_at(mu, sigma + step) - loss_at(mu, sigma - step)) / (2 * step)
        analytic = np.array([res.grad_mu[0, 0, 0], res.grad_sigma[0, 0, 0]])
        max_rel = max(max_rel, _relative_error(analytic, np.array([fd_mu, fd_sigma])))
    return {
        "samples": accepted,
        "flagged": flagged,
        "max_relative_error": max_rel,
        "pass": accepted == samples and max_rel < 1e-4,
    }
