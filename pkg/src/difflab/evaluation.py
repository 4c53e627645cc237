"""Held-out loss estimates, loss-vs-time binning, scaling curves and moment metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import PointCloud
from .forward import make_rng
from .losses import LossForm, loss_coefficient, squared_error
from .schedule import TargetSpace, snr_scaling
from .targets import noisify, target_for

EVAL_CHUNK = 16384


@dataclass(frozen=True)
class LossDraws:
    """Per-draw losses on a ``(points, draws)`` grid, all forms from the same draws."""

    t: np.ndarray
    nelbo: np.ndarray
    weighted: np.ndarray
    rescaled: np.ndarray

    def form(self, form) -> np.ndarray:
        return getattr(self, LossForm.parse(form).value)


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def predict_chunked(model, z, t) -> np.ndarray:
    out = np.empty_like(z)
    for start in range(0, len(z), EVAL_CHUNK):
        sl = slice(start, start + EVAL_CHUNK)
        out[sl] = model.predict(z[sl], t[sl])
    return out


def draw_losses(model, cloud, draws_per_point: int, seed: int, t_min: float = 1e-5,
                stratified: bool = True, label: str = "eval") -> LossDraws:
    """Monte Carlo loss draws for every point of ``cloud``.

    With ``stratified`` the k-th of K draws takes t uniformly inside the k-th
    of K equal slices of ``[t_min, 1 - t_min]``; otherwise t is uniform on the
    whole interval.  ``model`` needs ``predict_space`` and ``predict(z, t)``.
    """
    x = _points(cloud)
    n, d = x.shape
    k = int(draws_per_point)
    rng = make_rng(seed, label)
    u = rng.uniform(size=(n, k))
    eps = rng.standard_normal((n, k, d))
    width = 1.0 - 2.0 * t_min
    if stratified:
        t = t_min + width * (np.arange(k)[None, :] + u) / k
    else:
        t = t_min + width * u
    t = np.clip(t, t_min, 1.0 - t_min)
    xs = np.broadcast_to(x[:, None, :], (n, k, d)).reshape(-1, d)
    ts, es = t.reshape(-1), eps.reshape(-1, d)
    z = noisify(xs, es, ts)
    space = model.predict_space
    err = squared_error(target_for(space, xs, es, ts), predict_chunked(model, z, ts))
    shape = (n, k)
    return LossDraws(
        t=t,
        nelbo=(loss_coefficient(LossForm.NELBO, space, ts) * err).reshape(shape),
        weighted=err.reshape(shape),
        rescaled=(loss_coefficient(LossForm.RESCALED, space, ts) * err).reshape(shape),
    )


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


def _estimate(per_draw: np.ndarray) -> Estimate:
    per_point = per_draw.mean(axis=1)
    n = per_point.size
    stderr = float(per_point.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return Estimate(float(per_point.mean()), stderr)


def nelbo_estimate(model, cloud, draws_per_point: int = 8, seed: int = 0,
                   t_min: float = 1e-5) -> Estimate:
    """Stratified-time Monte Carlo estimate of the NELBO integrand's mean."""
    return _estimate(draw_losses(model, cloud, draws_per_point, seed, t_min).nelbo)


def loss_estimate(model, cloud, form, draws_per_point: int = 8, seed: int = 0,
                  t_min: float = 1e-5) -> Estimate:
    return _estimate(draw_losses(model, cloud, draws_per_point, seed, t_min).form(form))


@dataclass(frozen=True)
class TimestepBins:
    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray
    mean: np.ndarray  # NaN where a bin received no draws

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


def bin_by_time(t, losses, bins: int = 20, t_min: float = 1e-5) -> TimestepBins:
    """Bucket per-example losses into uniform time bins over ``[t_min, 1 - t_min]``."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    edges = np.linspace(t_min, 1.0 - t_min, bins + 1)
    idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, bins - 1)
    count = np.bincount(idx, minlength=bins)
    total = np.bincount(idx, weights=losses, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return TimestepBins(edges[:-1], edges[1:], count, mean)


def loss_vs_timestep(model, cloud, form, bins: int = 20, draws: int = 4, seed: int = 0,
                     t_min: float = 1e-5) -> TimestepBins:
    """Per-time-bin mean loss with t drawn uniformly (not stratified)."""
    d = draw_losses(model, cloud, draws, seed, t_min, stratified=False, label="timestep")
    return bin_by_time(d.t, d.form(form), bins, t_min)


def scaling_curves(t_grid) -> dict[TargetSpace, np.ndarray]:
    """1/w(t) per space on ``t_grid`` (must lie strictly inside (0, 1))."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    return {space: np.asarray(snr_scaling(space, t_grid)) for space in TargetSpace}


def _checked_points(cloud, min_points: int) -> np.ndarray:
    pts = _points(cloud)
    if pts.ndim != 2 or len(pts) < min_points:
        raise ValueError(f"need at least {min_points} points, got shape {pts.shape}")
    return pts


def mean_distance(a, b) -> float:
    """Euclidean distance between the two sample means."""
    pa, pb = _checked_points(a, 1), _checked_points(b, 1)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError("clouds differ in dimension")
    return float(np.linalg.norm(pa.mean(axis=0) - pb.mean(axis=0)))


def covariance_distance(a, b) -> float:
    """Frobenius norm of the difference of the unbiased sample covariances."""
    pa, pb = _checked_points(a, 2), _checked_points(b, 2)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError("clouds differ in dimension")
    diff = np.cov(pa, rowvar=False, ddof=1) - np.cov(pb, rowvar=False, ddof=1)
    return float(np.linalg.norm(np.atleast_2d(diff), ord="fro"))
