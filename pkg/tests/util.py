"""Shared helpers for the test suite.

The oracle_* functions re-derive geometry step by step with scalar math,
independently of the library's vectorized implementations, so tests can
compare two routes that share no code.
"""

import math

import numpy as np

from curverope.camera import RigidTransform, UcmCamera


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def random_camera(rng, xi=None, size=64):
    return UcmCamera(
        fx=rng.uniform(40, 120),
        fy=rng.uniform(40, 120),
        cx=size / 2 + rng.uniform(-3, 3),
        cy=size / 2 + rng.uniform(-3, 3),
        xi=rng.uniform(0, 1) if xi is None else xi,
        width=size,
        height=size,
    )


def oracle_unproject(cam, u, v):
    """Scalar inverse ray map: gamma formula then normalization."""
    x = (u - cam.cx) / cam.fx
    y = (v - cam.cy) / cam.fy
    rho2 = x * x + y * y
    gamma = (cam.xi + math.sqrt(1.0 + (1.0 - cam.xi * cam.xi) * rho2)) / (1.0 + rho2)
    vec = np.array([gamma * x, gamma * y, gamma - cam.xi])
    return vec / math.sqrt(float(vec @ vec))


def oracle_project(cam, point):
    """Scalar forward projection without the denominator guard."""
    x, y, z = (float(point[0]), float(point[1]), float(point[2]))
    norm = math.sqrt(x * x + y * y + z * z)
    beta = z + cam.xi * norm
    return np.array([cam.fx * x / beta + cam.cx, cam.fy * y / beta + cam.cy])


def oracle_bounded_coordinate(cam_q, rotation, translation, direction, radius):
    """Scalar lift -> transform -> project -> bounded coordinate.

    Returns (u_bounded, v_bounded, range) for one breakpoint.
    """
    p = radius * np.asarray(direction, dtype=float)
    q = np.asarray(rotation, dtype=float) @ p + np.asarray(translation, dtype=float)
    norm = math.sqrt(float(q @ q))
    beta = q[2] + cam_q.xi * norm
    ubar = (cam_q.fx / cam_q.width) * q[0] / beta
    vbar = (cam_q.fy / cam_q.height) * q[1] / beta
    scale = math.sqrt(ubar * ubar + vbar * vbar + 1.0)
    return np.array([ubar / scale, vbar / scale, norm])


def small_transform(rng, max_angle=0.1, max_shift=0.05):
    return RigidTransform(
        random_rotation(rng, max_angle), rng.uniform(-max_shift, max_shift, size=3)
    )
