"""Variance-preserving cosine noise schedule.

    alpha_t = cos(pi t / 2),   sigma_t = sin(pi t / 2)
    SNR(t)  = alpha_t^2 / sigma_t^2
    SNR'(t) = -pi alpha_t / sigma_t^3

Every function accepts a scalar or an array of times and works elementwise.
Exact endpoints where a quantity diverges raise :class:`ScheduleDomainError`
instead of being clamped.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ScheduleDomainError(ValueError):
    """A schedule quantity was requested where it diverges or is undefined."""


class TargetSpace(str, enum.Enum):
    X = "x"
    EPS = "eps"
    V = "v"
    S = "s"

    @classmethod
    def parse(cls, value: "str | TargetSpace") -> "TargetSpace":
        if isinstance(value, cls):
            return value
        aliases = {"epsilon": "eps", "e": "eps", "score": "s", "data": "x"}
        key = str(value).strip().lower()
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class ScheduleValues:
    alpha: float
    sigma: float
    snr: float
    snr_prime: float


@dataclass(frozen=True)
class TransitionCoeffs:
    alpha_ts: float
    sigma2_ts: float


def _as_time(t):
    arr = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ScheduleDomainError(f"time must lie in [0, 1], got {t!r}")
    return arr


def _scalarize(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def alpha_sigma(t):
    """Return ``(alpha_t, sigma_t)``. Both exact at the endpoints."""
    arr = _as_time(t)
    angle = 0.5 * np.pi * arr
    alpha = np.cos(angle)
    sigma = np.sin(angle)
    # cos(pi/2) is 6e-17 in floating point; pin the endpoints exactly.
    alpha = np.where(arr == 1.0, 0.0, alpha)
    sigma = np.where(arr == 0.0, 0.0, sigma)
    return _scalarize(alpha), _scalarize(sigma)


def _require_positive_sigma(t, what):
    arr = _as_time(t)
    if np.any(arr == 0.0):
        raise ScheduleDomainError(f"{what} diverges at t=0 (sigma_t = 0)")
    return arr


def _require_positive_alpha(t, what):
    arr = _as_time(t)
    if np.any(arr == 1.0):
        raise ScheduleDomainError(f"{what} diverges at t=1 (alpha_t = 0)")
    return arr


def snr(t):
    arr = _require_positive_sigma(t, "SNR")
    alpha, sigma = alpha_sigma(arr)
    return _scalarize(np.asarray(alpha) ** 2 / np.asarray(sigma) ** 2)


def snr_prime(t):
    """Analytic time derivative of the SNR, ``-pi alpha / sigma^3``."""
    arr = _require_positive_sigma(t, "SNR'")
    alpha, sigma = alpha_sigma(arr)
    return _scalarize(-np.pi * np.asarray(alpha) / np.asarray(sigma) ** 3)


def values(t: float) -> ScheduleValues:
    a, s = alpha_sigma(t)
    return ScheduleValues(alpha=a, sigma=s, snr=snr(t), snr_prime=snr_prime(t))


def transition_coeffs(s: float, t: float) -> TransitionCoeffs:
    """Coefficients of q(z_t | z_s) = N(alpha_ts z_s, sigma2_ts I)."""
    s_arr, t_arr = _as_time(s), _as_time(t)
    if np.any(s_arr > t_arr):
        raise ScheduleDomainError(f"transition requires s <= t, got s={s}, t={t}")
    alpha_s, sigma_s = alpha_sigma(s_arr)
    alpha_t, sigma_t = alpha_sigma(t_arr)
    if np.any(np.asarray(alpha_s) == 0.0):
        raise ScheduleDomainError("transition from s=1 is degenerate (alpha_s = 0)")
    alpha_ts = np.asarray(alpha_t) / np.asarray(alpha_s)
    sigma2_ts = np.asarray(sigma_t) ** 2 - alpha_ts**2 * np.asarray(sigma_s) ** 2
    # Round-off can push s == t slightly negative.
    sigma2_ts = np.maximum(sigma2_ts, 0.0)
    return TransitionCoeffs(alpha_ts=_scalarize(alpha_ts), sigma2_ts=_scalarize(sigma2_ts))


def weight(space, t):
    """Weighting w(t) that turns the space's NELBO integrand into a plain MSE.

    ``w_x = -1/SNR'``, ``w_eps = -SNR/SNR'``,
    ``w_v = -(alpha^2 + sigma^2)/(sigma^2 SNR')``, ``w_s = -alpha^2/(sigma^4 SNR')``.
    """
    space = TargetSpace.parse(space)
    arr = _require_positive_sigma(t, f"w_{space.value}")
    arr = _require_positive_alpha(arr, f"w_{space.value}")
    alpha, sigma = (np.asarray(v) for v in alpha_sigma(arr))
    d_snr = -np.pi * alpha / sigma**3
    if space is TargetSpace.X:
        w = -1.0 / d_snr
    elif space is TargetSpace.EPS:
        w = -(alpha**2 / sigma**2) / d_snr
    elif space is TargetSpace.V:
        w = -(alpha**2 + sigma**2) / (sigma**2 * d_snr)
    else:
        w = -(alpha**2) / (sigma**4 * d_snr)
    return _scalarize(w)


def snr_scaling(space, t):
    """Reciprocal weight 1/w(t): how strongly the NELBO scales each time step."""
    return _scalarize(1.0 / np.asarray(weight(space, t)))
