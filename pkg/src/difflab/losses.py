"""Per-example diffusion loss integrands.

Each integrand is ``c(form, space, t) * ||target - pred||^2`` with the squared
norm summed over data dimensions:

    NELBO     c = 1 / w_space(t)        (x space: -SNR'(t))
    WEIGHTED  c = 1
    RESCALED  c = w_x(t) / w_space(t)   (eps: sigma^2/alpha^2,
                                         v: sigma^2/(alpha^2+sigma^2),
                                         s: sigma^4/alpha^2)

The continuous forms drop the constant 1/2 of the Gaussian KL; the discrete
per-step term keeps it.
"""

from __future__ import annotations

import enum

import numpy as np

from .schedule import (
    ScheduleDomainError,
    TargetSpace,
    alpha_sigma,
    snr,
    snr_scaling,
)
from .targets import from_x_prediction, noisify, target_for


class LossForm(str, enum.Enum):
    NELBO = "nelbo"
    WEIGHTED = "weighted"
    RESCALED = "rescaled"

    @classmethod
    def parse(cls, value: "str | LossForm") -> "LossForm":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


def _interior(t):
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ScheduleDomainError("loss integrands need t strictly inside (0, 1)")
    return arr


def rescale_factor(space, t):
    """Factor mapping the weighted loss of ``space`` onto the weighted x loss."""
    space = TargetSpace.parse(space)
    arr = _interior(t)
    alpha, sigma = (np.asarray(v) for v in alpha_sigma(arr))
    if space is TargetSpace.X:
        c = np.ones_like(arr)
    elif space is TargetSpace.EPS:
        c = sigma**2 / alpha**2
    elif space is TargetSpace.V:
        c = sigma**2 / (alpha**2 + sigma**2)
    else:
        c = sigma**4 / alpha**2
    return float(c) if c.ndim == 0 else c


def loss_coefficient(form, space, t):
    form = LossForm.parse(form)
    arr = _interior(t)
    if form is LossForm.NELBO:
        return snr_scaling(space, arr)
    if form is LossForm.WEIGHTED:
        return 1.0 if arr.ndim == 0 else np.ones_like(arr)
    return rescale_factor(space, arr)


def squared_error(target, pred):
    target, pred = np.asarray(target), np.asarray(pred)
    if target.shape[-1] != pred.shape[-1]:
        raise ValueError(f"dimension mismatch: {target.shape} vs {pred.shape}")
    return np.sum((target - pred) ** 2, axis=-1)


def loss_integrand(form, space, target, pred, t):
    """Loss value per example; a float for a single vector, else an array."""
    value = loss_coefficient(form, space, t) * squared_error(target, pred)
    return float(value) if np.ndim(value) == 0 else value


def nelbo_equiv_check(x, x_hat, eps, t):
    """NELBO integrand of one data estimate, expressed in each of the four spaces.

    Returns an array ordered (x, eps, v, s); analytically all entries equal
    ``-SNR'(t) ||x - x_hat||^2``.
    """
    _interior(t)
    z = noisify(x, eps, t)
    out = []
    for space in TargetSpace:
        target = target_for(space, x, eps, t)
        pred = from_x_prediction(space, x_hat, z, t)
        out.append(loss_integrand(LossForm.NELBO, space, target, pred, t))
    return np.array(out)


def discrete_nelbo_term(x, x_hat, s, t):
    """KL between the true and model posteriors for one step s -> t.

    ``0.5 * (SNR(s) - SNR(t)) * ||x - x_hat||^2``; the factor 1/2 is kept.
    """
    if np.any(np.asarray(s) >= np.asarray(t)):
        raise ScheduleDomainError(f"discrete step requires s < t, got s={s}, t={t}")
    value = 0.5 * (np.asarray(snr(s)) - np.asarray(snr(t))) * squared_error(x, x_hat)
    return float(value) if np.ndim(value) == 0 else value
