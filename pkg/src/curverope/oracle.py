"""Monte-Carlo oracle for the expected phasor.

Samples log radial distance uniformly, pushes every sample through exact
(non-linearized) lift -> transform -> project -> bounded coordinate, and
averages the phasor directly. This is the definitional estimate that the
analytic piecewise-segment integration is checked against; the projection
math is written out here rather than shared, so the two routes stay
independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Ray, RigidTransform, UcmCamera
from .phasor import RadialInterval, breakpoints, expected_phasor, projected_path

__all__ = [
    "PhasorSetup",
    "random_setup",
    "mc_expected_phasor",
    "analytic_expected_phasor",
    "run_oracle_check",
]


@dataclass(frozen=True)
class PhasorSetup:
    """One random phasor configuration: cameras, pose, ray, interval, frequency."""

    cam_q: UcmCamera
    transform: RigidTransform
    ray: Ray
    interval: RadialInterval
    omega: float


def _small_rotation(rng: np.random.Generator, max_angle: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def random_setup(rng: np.random.Generator, k_check: int = 129) -> PhasorSetup:
    """Draw a geometrically benign configuration.

    Setups are resampled until every breakpoint of a fine path is valid
    with margin, so the Monte-Carlo route never straddles the projection
    guard.
    """
    while True:
        w = h = 128
        cam_s = UcmCamera(
            fx=rng.uniform(60, 120), fy=rng.uniform(60, 120),
            cx=w / 2 + rng.uniform(-4, 4), cy=h / 2 + rng.uniform(-4, 4),
            xi=rng.uniform(0, 1), width=w, height=h,
        )
        cam_q = UcmCamera(
            fx=rng.uniform(60, 120), fy=rng.uniform(60, 120),
            cx=w / 2 + rng.uniform(-4, 4), cy=h / 2 + rng.uniform(-4, 4),
            xi=rng.uniform(0, 1), width=w, height=h,
        )
        pixel = np.array(
            [w / 2 + rng.uniform(-0.3, 0.3) * w, h / 2 + rng.uniform(-0.3, 0.3) * h]
        )
        px = (pixel[0] - cam_s.cx) / cam_s.fx
        py = (pixel[1] - cam_s.cy) / cam_s.fy
        rho2 = px * px + py * py
        gamma = (cam_s.xi + np.sqrt(1 + (1 - cam_s.xi**2) * rho2)) / (1 + rho2)
        vec = np.array([gamma * px, gamma * py, gamma - cam_s.xi])
        ray = Ray(vec / np.linalg.norm(vec))
        transform = RigidTransform(
            _small_rotation(rng, 0.1), rng.uniform(-0.05, 0.05, size=3)
        )
        interval = RadialInterval(rng.uniform(-0.5, 1.5), rng.uniform(0.1, 1.0))
        omega = float(np.exp(rng.uniform(np.log(0.02), np.log(2.0))))
        path = projected_path(cam_q, transform, ray, breakpoints(interval, k_check))
        pts = transform.apply(breakpoints(interval, k_check)[:, None] * ray.direction)
        z = pts[:, 2]
        beta = z + cam_q.xi * np.linalg.norm(pts, axis=1)
        if np.all(path.valid) and np.min(beta) > 1e-3 and np.min(z) > 1e-3:
            return PhasorSetup(cam_q, transform, ray, interval, omega)


def mc_expected_phasor(setup: PhasorSetup, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo phasor mean per coordinate, shape (3, 2)."""
    iv = setup.interval
    a = abs(iv.sigma)
    z = rng.uniform(iv.mu - a, iv.mu + a, size=samples)
    r = np.exp(z)
    d = setup.ray.direction
    rot = setup.transform.rotation
    t = setup.transform.translation
    pts = r[:, None] * d[None, :] @ rot.T + t
    rng_norm = np.sqrt(pts[:, 0] ** 2 + pts[:, 1] ** 2 + pts[:, 2] ** 2)
    cam = setup.cam_q
    beta = pts[:, 2] + cam.xi * rng_norm
    ub = (cam.fx / cam.width) * pts[:, 0] / beta
    vb = (cam.fy / cam.height) * pts[:, 1] / beta
    denom = np.sqrt(ub * ub + vb * vb + 1.0)
    coords = np.stack([ub / denom, vb / denom, rng_norm], axis=0)
    theta = setup.omega * coords
    return np.stack([np.cos(theta).mean(axis=1), np.sin(theta).mean(axis=1)], axis=1)


def analytic_expected_phasor(setup: PhasorSetup, k: int) -> np.ndarray:
    """Segment-integrated phasor per coordinate, shape (3, 2)."""
    path = projected_path(
        setup.cam_q, setup.transform, setup.ray, breakpoints(setup.interval, k)
    )
    pts = path.points[path.valid]
    if pts.shape[0] < 2:
        raise ValueError("oracle setups must keep at least two valid breakpoints")
    phases = setup.omega * pts.T  # (3, K)
    return expected_phasor(phases)


def run_oracle_check(
    num_configs: int,
    samples: int,
    k_values,
    seed: int,
    mc_tolerance: float = 5e-3,
    reference_k: int = 129,
    win_fraction: float = 0.9,
) -> dict:
    """Compare analytic expected phasors against the MC estimate.

    Per configuration, reports the max component error of the reference-K
    analytic value against MC, and the max component error of every other
    K against the reference. Passing requires the MC error within
    tolerance everywhere, and K=5 beating K=2 (vs the reference) on at
    least win_fraction of configurations when both are requested.
    """
    k_values = sorted(set(int(k) for k in k_values) | {reference_k})
    rows = []
    for i in range(num_configs):
        cfg_rng = np.random.default_rng([seed, i])
        setup = random_setup(cfg_rng)
        mc = mc_expected_phasor(setup, samples, cfg_rng)
        ref = analytic_expected_phasor(setup, reference_k)
        row = {
            "config": i,
            "sigma": setup.interval.sigma,
            "omega": setup.omega,
            "mc_error": float(np.max(np.abs(ref - mc))),
        }
        for k in k_values:
            if k == reference_k:
                continue
            approx = analytic_expected_phasor(setup, k)
            row[f"err_k{k}"] = float(np.max(np.abs(approx - ref)))
        rows.append(row)

    report = {
        "num_configs": num_configs,
        "samples": samples,
        "reference_k": reference_k,
        "mc_tolerance": mc_tolerance,
        "max_mc_error": max(r["mc_error"] for r in rows),
        "mc_pass": all(r["mc_error"] <= mc_tolerance for r in rows),
    }
    if 5 in k_values and 2 in k_values and 5 != reference_k:
        wins = sum(1 for r in rows if r["err_k5"] <= r["err_k2"])
        report["k5_beats_k2_fraction"] = wins / num_configs
        report["k5_pass"] = wins / num_configs >= win_fraction
    report["pass"] = report["mc_pass"] and report.get("k5_pass", True)
    return {"report": report, "rows": rows}
