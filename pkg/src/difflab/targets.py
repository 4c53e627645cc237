"""Conversions between the data, noise, velocity and score parameterizations.

All functions broadcast over a leading batch axis: vectors are ``(..., d)``
arrays and ``t`` is a scalar or an array of shape ``(...)``.  Under the
variance-preserving schedule the angular coefficients of the velocity
parameterization are exactly ``cos(phi_t) = alpha_t`` and
``sin(phi_t) = sigma_t``, so the angle itself is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import ScheduleDomainError, TargetSpace, alpha_sigma


@dataclass(frozen=True)
class Prediction:
    space: TargetSpace
    value: np.ndarray


def _coeffs(t):
    """alpha_t, sigma_t shaped to broadcast against (..., d) vectors."""
    alpha, sigma = alpha_sigma(t)
    return np.asarray(alpha)[..., None], np.asarray(sigma)[..., None]


def _check_dims(*vecs):
    dims = {np.shape(v)[-1] for v in vecs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {[np.shape(v) for v in vecs]}")


def noisify(x, eps, t):
    _check_dims(x, eps)
    alpha, sigma = _coeffs(t)
    return alpha * np.asarray(x) + sigma * np.asarray(eps)


def v_target(x, eps, t):
    _check_dims(x, eps)
    alpha, sigma = _coeffs(t)
    return alpha * np.asarray(eps) - sigma * np.asarray(x)


def score_target(x, z, t):
    """Score of q(z_t | x): ``-(z - alpha x) / sigma^2``."""
    _check_dims(x, z)
    alpha, sigma = _coeffs(t)
    if np.any(sigma == 0.0):
        raise ScheduleDomainError("score is undefined at t=0 (sigma_t = 0)")
    return -(np.asarray(z) - alpha * np.asarray(x)) / sigma**2


def eps_target(x, z, t):
    """Noise implied by a data point and a latent, ``(z - alpha x) / sigma``."""
    _check_dims(x, z)
    alpha, sigma = _coeffs(t)
    if np.any(sigma == 0.0):
        raise ScheduleDomainError("noise is not identifiable at t=0 (sigma_t = 0)")
    return (np.asarray(z) - alpha * np.asarray(x)) / sigma


def _require_alpha(alpha, what):
    if np.any(alpha == 0.0):
        raise ScheduleDomainError(f"{what} diverges at t=1 (alpha_t = 0)")


def x_from_eps(z, eps_hat, t):
    _check_dims(z, eps_hat)
    alpha, sigma = _coeffs(t)
    _require_alpha(alpha, "x from eps")
    return (np.asarray(z) - sigma * np.asarray(eps_hat)) / alpha


def x_from_v(z, v_hat, t):
    _check_dims(z, v_hat)
    alpha, sigma = _coeffs(t)
    return alpha * np.asarray(z) - sigma * np.asarray(v_hat)


def x_from_score(z, s_hat, t):
    """Tweedie: ``alpha x = z + sigma^2 s``."""
    _check_dims(z, s_hat)
    alpha, sigma = _coeffs(t)
    _require_alpha(alpha, "x from score")
    return (np.asarray(z) + sigma**2 * np.asarray(s_hat)) / alpha


def to_x_prediction(pred: Prediction, z, t):
    """Data estimate implied by a prediction in any space."""
    space = TargetSpace.parse(pred.space)
    if space is TargetSpace.X:
        _check_dims(z, pred.value)
        return np.asarray(pred.value)
    if space is TargetSpace.EPS:
        return x_from_eps(z, pred.value, t)
    if space is TargetSpace.V:
        return x_from_v(z, pred.value, t)
    return x_from_score(z, pred.value, t)


def target_for(space, x, eps, t):
    """Regression target of ``space`` for a clean point and its noise draw."""
    space = TargetSpace.parse(space)
    if space is TargetSpace.X:
        return np.asarray(x, dtype=np.float64)
    if space is TargetSpace.EPS:
        return np.asarray(eps, dtype=np.float64)
    if space is TargetSpace.V:
        return v_target(x, eps, t)
    # Same as score_target(x, noisify(x, eps, t), t) without the cancellation.
    _, sigma = _coeffs(t)
    if np.any(sigma == 0.0):
        raise ScheduleDomainError("score is undefined at t=0 (sigma_t = 0)")
    return -np.asarray(eps, dtype=np.float64) / sigma


def from_x_prediction(space, x_hat, z, t):
    """Express a data estimate as the equivalent prediction in ``space``."""
    space = TargetSpace.parse(space)
    if space is TargetSpace.X:
        return np.asarray(x_hat)
    eps_hat = eps_target(x_hat, z, t)
    if space is TargetSpace.EPS:
        return eps_hat
    if space is TargetSpace.V:
        return v_target(x_hat, eps_hat, t)
    _, sigma = _coeffs(t)
    return -eps_hat / sigma
