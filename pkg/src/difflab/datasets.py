"""Two-dimensional toy datasets: cluster, ring, swiss roll and waves.

Raw generators produce O(1)-scale shapes; :func:`generate` then standardizes
each dimension to zero mean and unit standard deviation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .forward import make_rng


class DatasetKind(str, enum.Enum):
    CLUSTER = "cluster"
    RING = "ring"
    SWISS = "swiss"
    WAVES = "waves"

    @classmethod
    def parse(cls, value: "str | DatasetKind") -> "DatasetKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        return cls({"swissroll": "swiss", "swiss_roll": "swiss", "wave": "waves"}.get(key, key))


@dataclass(frozen=True)
class DatasetParams:
    """Generator knobs; the defaults give well-separated shapes at unit scale."""

    cluster_count: int = 6
    cluster_radius: float = 1.5
    cluster_std: float = 0.12
    ring_radius: float = 1.0
    ring_noise: float = 0.05
    swiss_u_min: float = 1.5 * np.pi
    swiss_u_max: float = 4.5 * np.pi
    swiss_noise: float = 0.02
    waves_offsets: tuple = (-1.0, 0.0, 1.0)
    waves_amplitude: float = 0.4
    waves_frequency: float = 3.0
    waves_x_range: float = 2.0
    waves_noise: float = 0.05


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    kind: DatasetKind | None = None
    seed: int = 0
    normalized: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError(f"point cloud must be a non-empty (N, d) array, got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class RawSample:
    """Un-normalized points plus the mixture component each came from."""

    points: np.ndarray
    component: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def generate_raw(kind, n: int, seed: int, params: DatasetParams = DatasetParams()) -> RawSample:
    kind = DatasetKind.parse(kind)
    rng = make_rng(seed, f"data/{kind.value}")
    if kind is DatasetKind.CLUSTER:
        comp = rng.integers(0, params.cluster_count, size=n)
        angles = 2.0 * np.pi * comp / params.cluster_count
        centers = params.cluster_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        pts = centers + params.cluster_std * rng.standard_normal((n, 2))
        return RawSample(pts, comp)
    if kind is DatasetKind.RING:
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        r = params.ring_radius + params.ring_noise * rng.standard_normal(n)
        pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        return RawSample(pts, np.zeros(n, dtype=int))
    if kind is DatasetKind.SWISS:
        u = rng.uniform(params.swiss_u_min, params.swiss_u_max, size=n)
        pts = np.stack([u * np.cos(u), u * np.sin(u)], axis=1) / params.swiss_u_max
        pts = pts + params.swiss_noise * rng.standard_normal((n, 2))
        return RawSample(pts, np.zeros(n, dtype=int))
    offsets = np.asarray(params.waves_offsets, dtype=np.float64)
    comp = rng.integers(0, len(offsets), size=n)
    xs = rng.uniform(-params.waves_x_range, params.waves_x_range, size=n)
    ys = (
        params.waves_amplitude * np.sin(params.waves_frequency * xs)
        + offsets[comp]
        + params.waves_noise * rng.standard_normal(n)
    )
    return RawSample(np.stack([xs, ys], axis=1), comp)


def normalize(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    centered = points - points.mean(axis=0)
    return centered / centered.std(axis=0)


def generate(kind, n: int, seed: int, params: DatasetParams = DatasetParams()) -> PointCloud:
    if n < 2:
        raise ValueError(f"need at least 2 points to normalize, got n={n}")
    kind = DatasetKind.parse(kind)
    raw = generate_raw(kind, n, seed, params)
    return PointCloud(normalize(raw.points), kind=kind, seed=seed, normalized=True)


def split_indices(n: int, seed: int, test_fraction: float = 0.1):
    """``(train_idx, test_idx)`` from a shuffle keyed by ``seed``."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise ValueError(f"split of {n} points at {test_fraction} leaves an empty side")
    perm = make_rng(seed, "split").permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split(cloud: PointCloud, test_fraction: float = 0.1):
    """Deterministic train/test split keyed by the cloud's seed."""
    train_idx, test_idx = split_indices(len(cloud), cloud.seed, test_fraction)
    return (
        PointCloud(cloud.points[train_idx], cloud.kind, cloud.seed, cloud.normalized),
        PointCloud(cloud.points[test_idx], cloud.kind, cloud.seed, cloud.normalized),
    )
