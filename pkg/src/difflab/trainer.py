"""Monte Carlo training loop with Adam and per-epoch held-out evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import DatasetKind, PointCloud
from .denoiser import Architecture, DenoiserModel, backward_pass, forward_pass, init
from .evaluation import TimestepBins, bin_by_time, draw_losses
from .forward import make_rng
from .losses import LossForm, loss_coefficient
from .schedule import TargetSpace
from .targets import noisify, target_for

log = logging.getLogger(__name__)

NUM_BINS = 20


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    space: TargetSpace = TargetSpace.EPS
    form: LossForm = LossForm.WEIGHTED
    dataset: DatasetKind = DatasetKind.RING
    epochs: int = 200
    batch_size: int = 512
    learning_rate: float = 1e-3
    seed: int = 0
    t_min: float = 1e-5
    eval_draws_per_point: int = 8
    hidden_width: int = 128
    num_layers: int = 7
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "space", TargetSpace.parse(self.space))
        object.__setattr__(self, "form", LossForm.parse(self.form))
        object.__setattr__(self, "dataset", DatasetKind.parse(self.dataset))
        if self.form is LossForm.RESCALED:
            raise ValueError("the rescaled form is for evaluation only")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0.0 < self.t_min < 0.5:
            raise ValueError(f"t_min must be in (0, 0.5), got {self.t_min}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam update; ``params`` are modified in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
    return state


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    test_nelbo: float
    test_weighted: float
    test_rescaled: float


@dataclass
class RunRecord:
    config: TrainConfig
    epochs: list[EpochStats] = field(default_factory=list)
    bins: list[TimestepBins] = field(default_factory=list)
    model: DenoiserModel | None = None
    seconds: float = 0.0


def batch_loss_and_grad(model: DenoiserModel, x, t, eps, form, prediction=None):
    """Per-example losses and the parameter gradient of their batch mean.

    ``prediction`` replaces the network output when given (used to probe the
    zero-residual case); the gradient still flows through the network.
    """
    z = noisify(x, eps, t)
    out, cache = forward_pass(model, z, t)
    pred = out if prediction is None else np.asarray(prediction, dtype=np.float64)
    target = target_for(model.predict_space, x, eps, t)
    c = np.asarray(loss_coefficient(form, model.predict_space, t))
    resid = target - pred
    losses = c * np.sum(resid**2, axis=-1)
    # c depends only on t, so it is a constant for the parameter gradient.
    upstream = (-2.0 / len(x)) * c[:, None] * resid
    return losses, backward_pass(model, cache, upstream)


def evaluate_epoch(model: DenoiserModel, test_cloud: PointCloud, config: TrainConfig):
    """``(nelbo, weighted, rescaled)`` on the test cloud from one shared set of draws."""
    d = draw_losses(model, test_cloud, config.eval_draws_per_point, config.seed, config.t_min)
    return float(d.nelbo.mean()), float(d.weighted.mean()), float(d.rescaled.mean())


def train(config: TrainConfig, train_cloud: PointCloud, test_cloud: PointCloud,
          progress=None) -> RunRecord:
    """Train one (space, form, dataset, seed) cell; deterministic in its inputs."""
    started = time.perf_counter()
    x_all = np.asarray(train_cloud.points, dtype=np.float64)
    n, d = x_all.shape
    arch = Architecture(data_dim=d, hidden_width=config.hidden_width, num_layers=config.num_layers)
    model = init(arch, config.seed, config.space, dtype=np.dtype(config.dtype))
    params = model.parameters()
    state = AdamState.zeros_like(params)
    record = RunRecord(config=config, model=model)
    lo, hi = config.t_min, 1.0 - config.t_min
    step = 0
    for epoch in range(1, config.epochs + 1):
        rng = make_rng(config.seed, "train", epoch)
        order = rng.permutation(n)
        epoch_t = np.empty(n)
        epoch_loss = np.empty(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = x_all[idx]
            t = rng.uniform(lo, hi, size=len(idx))
            eps = rng.standard_normal((len(idx), d))
            losses, grads = batch_loss_and_grad(model, x, t, eps, config.form)
            step += 1
            if not np.all(np.isfinite(losses)):
                bad = losses[~np.isfinite(losses)][0]
                raise NumericalAbort(
                    f"non-finite loss at epoch {epoch} step {step}: "
                    f"t in [{t.min():.3g}, {t.max():.3g}], loss={bad}"
                )
            adam_step(params, grads.flat(), state, config.learning_rate)
            epoch_t[start : start + len(idx)] = t
            epoch_loss[start : start + len(idx)] = losses
        nelbo, weighted, rescaled = evaluate_epoch(model, test_cloud, config)
        stats = EpochStats(epoch, float(epoch_loss.mean()), nelbo, weighted, rescaled)
        record.epochs.append(stats)
        record.bins.append(bin_by_time(epoch_t, epoch_loss, NUM_BINS, config.t_min))
        log.debug("epoch %d: train %.6g, test nelbo %.6g", epoch, stats.train_loss, nelbo)
        if progress is not None:
            progress(stats)
    record.seconds = time.perf_counter() - started
    return record
