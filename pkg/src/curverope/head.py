"""Per-token head predicting a clamped log radial-distance interval.

Architecture: layer norm -> linear -> SiLU -> linear -> (mu, sigma),
then mu is clipped to [-3, 3] and |sigma| capped so the interval fits.
The final layer starts at zero weights with bias (0, 3), so every input
maps to the broad interval (mu=0, sigma=3) at initialization. Forward and
backward are implemented directly so gradients stay exact and checkable
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .phasor import LOG_RANGE_BOUND, RadialInterval

__all__ = [
    "LN_EPS",
    "HeadParams",
    "HeadGradients",
    "hidden_width",
    "head_init",
    "head_forward",
    "head_forward_batch",
    "head_backward",
    "head_backward_batch",
]

LN_EPS = 1e-5


@dataclass
class HeadParams:
    """Head parameters; field order defines the checkpoint layout."""

    norm_scale: np.ndarray
    norm_bias: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def d_model(self) -> int:
        return self.norm_scale.shape[0]

    @property
    def d_hidden(self) -> int:
        return self.b1.shape[0]

    def field_arrays(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass
class HeadGradients:
    """Gradients matching HeadParams plus the input-feature gradient."""

    norm_scale: np.ndarray
    norm_bias: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    feature: np.ndarray

    def param_arrays(self):
        return [
            (name, getattr(self, name))
            for name in ("norm_scale", "norm_bias", "w1", "b1", "w2", "b2")
        ]


def hidden_width(d_model: int) -> int:
    return max(16, d_model // 4)


def head_init(d_model: int, seed: int) -> HeadParams:
    """Seeded init: uniform fan-in first layer, zero final layer, bias (0, 3)."""
    if d_model < 1:
        raise ValueError("d_model must be >= 1")
    rng = np.random.default_rng(seed)
    h = hidden_width(d_model)
    bound = 1.0 / np.sqrt(d_model)
    return HeadParams(
        norm_scale=np.ones(d_model),
        norm_bias=np.zeros(d_model),
        w1=rng.uniform(-bound, bound, size=(d_model, h)),
        b1=rng.uniform(-bound, bound, size=h),
        w2=np.zeros((h, 2)),
        b2=np.array([0.0, LOG_RANGE_BOUND]),
    )


def _sigmoid(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _forward_cache(params: HeadParams, x: np.ndarray) -> dict:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    std = np.sqrt(var + LN_EPS)
    xhat = (x - mean) / std
    y = xhat * params.norm_scale + params.norm_bias
    u = y @ params.w1 + params.b1
    sig = _sigmoid(u)
    h = u * sig
    raw = h @ params.w2 + params.b2
    mu_raw = raw[..., 0]
    sigma_raw = raw[..., 1]
    mu = np.clip(mu_raw, -LOG_RANGE_BOUND, LOG_RANGE_BOUND)
    cap = LOG_RANGE_BOUND - np.abs(mu)
    abs_sig = np.abs(sigma_raw)
    sigma = np.where(abs_sig <= cap, sigma_raw, np.copysign(cap, sigma_raw))
    return {
        "x": x, "std": std, "xhat": xhat, "y": y, "u": u, "sig": sig, "h": h,
        "mu_raw": mu_raw, "sigma_raw": sigma_raw, "mu": mu, "sigma": sigma,
        "mu_active": np.abs(mu_raw) <= LOG_RANGE_BOUND,
        "sigma_active": abs_sig <= cap,
    }


def _check_feature(params: HeadParams, feature: np.ndarray, batch: bool) -> np.ndarray:
    x = np.asarray(feature, dtype=float)
    want = 2 if batch else 1
    if x.ndim != want or x.shape[-1] != params.d_model:
        raise ValueError(f"feature shape {x.shape} does not match d_model={params.d_model}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    return x


def head_forward(params: HeadParams, feature: np.ndarray) -> RadialInterval:
    """Predict the clamped radial interval for one token feature."""
    x = _check_feature(params, feature, batch=False)
    cache = _forward_cache(params, x[None, :])
    return RadialInterval(float(cache["mu"][0]), float(cache["sigma"][0]))


def head_forward_batch(params: HeadParams, features: np.ndarray):
    """Vectorized forward over (N, d_model) features; returns (mu, sigma)."""
    x = _check_feature(params, features, batch=True)
    cache = _forward_cache(params, x)
    return cache["mu"], cache["sigma"]


def head_backward_batch(
    params: HeadParams,
    features: np.ndarray,
    grad_mu: np.ndarray,
    grad_sigma: np.ndarray,
) -> HeadGradients:
    """Exact reverse-mode gradients, summed over the batch for parameters.

    Clamped regions use subgradient 0; in the sigma-capped region the cap
    3 - |mu| routes part of the sigma gradient into mu.
    """
    x = _check_feature(params, features, batch=True)
    gm = np.asarray(grad_mu, dtype=float)
    gs = np.asarray(grad_sigma, dtype=float)
    if gm.shape != x.shape[:1] or gs.shape != x.shape[:1]:
        raise ValueError("upstream gradients must be one scalar per token")
    c = _forward_cache(params, x)

    g_sigma_raw = np.where(c["sigma_active"], gs, 0.0)
    # sigma = sign(sigma_raw) * (3 - |mu|) when capped: d sigma / d mu.
    cap_to_mu = np.where(
        c["sigma_active"], 0.0, -np.sign(c["sigma_raw"]) * np.sign(c["mu"])
    )
    g_mu = gm + gs * cap_to_mu
    g_mu_raw = np.where(c["mu_active"], g_mu, 0.0)

    g_raw = np.stack([g_mu_raw, g_sigma_raw], axis=-1)
    g_h = g_raw @ params.w2.T
    g_w2 = c["h"].T @ g_raw
    g_b2 = g_raw.sum(axis=0)

    dsilu = c["sig"] * (1.0 + c["u"] * (1.0 - c["sig"]))
    g_u = g_h * dsilu
    g_y = g_u @ params.w1.T
    g_w1 = c["y"].T @ g_u
    g_b1 = g_u.sum(axis=0)

    g_xhat = g_y * params.norm_scale
    g_scale = (g_y * c["xhat"]).sum(axis=0)
    g_bias = g_y.sum(axis=0)
    m1 = g_xhat.mean(axis=-1, keepdims=True)
    m2 = (g_xhat * c["xhat"]).mean(axis=-1, keepdims=True)
    g_x = (g_xhat - m1 - c["xhat"] * m2) / c["std"]

    return HeadGradients(
        norm_scale=g_scale, norm_bias=g_bias,
        w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2,
        feature=g_x,
    )


def head_backward(
    params: HeadParams,
    feature: np.ndarray,
    grad_mu: float,
    grad_sigma: float,
) -> HeadGradients:
    """Gradients for a single token; see head_backward_batch."""
    x = _check_feature(params, feature, batch=False)
    g = head_backward_batch(params, x[None, :], np.array([grad_mu]), np.array([grad_sigma]))
    g.feature = g.feature[0]
    return g
