"""Forward diffusion: marginal draws, the true posterior, and transition KLs.

Randomness is keyed by ``(seed, label, index)``: each triple selects an
independent Philox stream, so a draw never depends on what else consumed
randomness before it.  Normal variates come from numpy's ziggurat sampler;
results are reproducible for a given numpy build, not bit-identical across
platforms.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .losses import discrete_nelbo_term
from .schedule import ScheduleDomainError, alpha_sigma, transition_coeffs
from .targets import noisify

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngState:
    seed: int
    label: str = ""
    index: int = 0

    def generator(self) -> np.random.Generator:
        return make_rng(self.seed, self.label, self.index)


def make_rng(seed: int, label: str = "", index: int = 0) -> np.random.Generator:
    """Deterministic generator for one (seed, purpose label, index) triple."""
    words = [int(seed) & _U64, zlib.crc32(label.encode("utf-8")), int(index) & _U64]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def _generator(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngState) else rng


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray
    var: float


def sample_marginal(x, t, rng):
    """Draw z_t ~ q(z_t | x); returns ``(z, eps)`` so any target can be formed."""
    x = np.asarray(x, dtype=np.float64)
    eps = _generator(rng).standard_normal(x.shape)
    return noisify(x, eps, t), eps


def _check_order(s, t):
    if not (0.0 < s < t <= 1.0):
        raise ScheduleDomainError(f"posterior needs 0 < s < t <= 1, got s={s}, t={t}")


def posterior_coeffs(s: float, t: float):
    """``(c_z, c_x, var)`` with q(z_s | z_t, x) = N(c_z z_t + c_x x, var I)."""
    _check_order(s, t)
    alpha_s, sigma_s = alpha_sigma(s)
    _, sigma_t = alpha_sigma(t)
    tc = transition_coeffs(s, t)
    c_z = tc.alpha_ts * sigma_s**2 / sigma_t**2
    c_x = alpha_s * tc.sigma2_ts / sigma_t**2
    var = tc.sigma2_ts * sigma_s**2 / sigma_t**2
    return c_z, c_x, var


def posterior_params(z_t, x, s: float, t: float) -> GaussianParams:
    c_z, c_x, var = posterior_coeffs(s, t)
    mean = c_z * np.asarray(z_t, dtype=np.float64) + c_x * np.asarray(x, dtype=np.float64)
    return GaussianParams(mean=mean, var=var)


def kl_transition(x, x_hat, s: float, t: float):
    """KL(q(z_s|z_t,x) || q(z_s|z_t,x_hat)), closed form ``0.5 (SNR(s)-SNR(t)) |x-x_hat|^2``."""
    _check_order(s, t)
    return discrete_nelbo_term(x, x_hat, s, t)


def kl_transition_moments(x, x_hat, s: float, t: float):
    """Same KL computed from the two posterior means and their shared variance."""
    zero = np.zeros_like(np.asarray(x, dtype=np.float64))
    p = posterior_params(zero, x, s, t)
    q = posterior_params(zero, x_hat, s, t)
    value = np.sum((p.mean - q.mean) ** 2, axis=-1) / (2.0 * p.var)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class ComposeStats:
    mean: np.ndarray
    var: np.ndarray
    expected_mean: np.ndarray
    expected_var: float
    mean_stderr: np.ndarray
    var_stderr: np.ndarray

    @property
    def max_z(self) -> float:
        """Largest deviation from the one-step marginal, in standard errors."""
        zm = np.abs(self.mean - self.expected_mean) / self.mean_stderr
        zv = np.abs(self.var - self.expected_var) / self.var_stderr
        return float(max(zm.max(), zv.max()))


def compose_check(x, s: float, t: float, rng, n: int) -> ComposeStats:
    """Two-step draws x -> z_s -> z_t compared against q(z_t | x)."""
    if not (0.0 < s <= t <= 1.0):
        raise ScheduleDomainError(f"compose_check needs 0 < s <= t <= 1, got s={s}, t={t}")
    gen = _generator(rng)
    x = np.asarray(x, dtype=np.float64)
    xs = np.broadcast_to(x, (n, x.shape[-1]))
    z_s, _ = sample_marginal(xs, s, gen)
    tc = transition_coeffs(s, t)
    z_t = tc.alpha_ts * z_s + np.sqrt(tc.sigma2_ts) * gen.standard_normal(z_s.shape)
    alpha_t, sigma_t = alpha_sigma(t)
    mean = z_t.mean(axis=0)
    var = z_t.var(axis=0, ddof=1)
    return ComposeStats(
        mean=mean,
        var=var,
        expected_mean=alpha_t * x,
        expected_var=sigma_t**2,
        mean_stderr=np.sqrt(var / n),
        var_stderr=var * np.sqrt(2.0 / (n - 1)),
    )
