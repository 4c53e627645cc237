import numpy as np
import pytest

from difflab.denoiser import Architecture, init
from difflab.forward import make_rng, posterior_coeffs
from difflab.sampler import SampleConfig, first_prediction_time, sample, sample_chain, step_grid
from difflab.targets import Prediction, to_x_prediction
from oracles import PointOracle


def test_step_grid_small_cases():
    assert step_grid(2) == [(0.5, 1.0), (0.0, 0.5)]
    grid = step_grid(4)
    assert len(grid) == 4
    assert [t for _, t in grid] == [1.0, 0.75, 0.5, 0.25]
    for (s1, _), (_, t2) in zip(grid, grid[1:]):
        assert s1 == t2


@pytest.mark.parametrize("n", [1, 3, 7, 512])
def test_step_grid_tiles_unit_interval(n):
    grid = step_grid(n)
    assert grid[0][1] == 1.0 and grid[-1][0] == 0.0
    widths = [t - s for s, t in grid]
    assert sum(widths) == pytest.approx(1.0)
    assert all(w > 0 for w in widths)


def test_zero_steps_rejected():
    with pytest.raises(ValueError):
        step_grid(0)
    with pytest.raises(ValueError):
        SampleConfig(num_steps=0)


def test_first_query_is_inside_top_interval():
    assert first_prediction_time(1) == 0.5
    assert first_prediction_time(512) == pytest.approx(1 - 1 / 1024)


@pytest.mark.parametrize("space", ["x", "eps", "v", "s"])
def test_single_step_returns_x_hat_of_initial_latent(space):
    model = init(Architecture(hidden_width=16), 0, space, dtype=np.float64)
    cfg = SampleConfig(num_steps=1, num_samples=64, seed=3)
    samples, latent = sample_chain(model, cfg)
    z1 = make_rng(3, "sample").standard_normal((64, 2))
    np.testing.assert_array_equal(latent, z1)
    t = np.full(64, first_prediction_time(1))
    expected = to_x_prediction(Prediction(model.predict_space, model.predict(z1, t)), z1, t)
    np.testing.assert_allclose(samples, expected, rtol=1e-12)


@pytest.mark.parametrize("space", ["x", "eps", "v", "s"])
def test_point_oracle_collapses_samples(space):
    x0 = np.array([0.4, -1.1])
    cloud = sample(PointOracle(x0, space), SampleConfig(num_steps=512, num_samples=200), data_dim=2)
    assert np.abs(cloud.points - x0).max() < 1e-3


def test_sampling_is_deterministic():
    model = init(Architecture(hidden_width=16), 2, "v")
    cfg = SampleConfig(num_steps=16, num_samples=100, seed=9)
    np.testing.assert_array_equal(sample(model, cfg).points, sample(model, cfg).points)
    other = sample(model, SampleConfig(num_steps=16, num_samples=100, seed=10)).points
    assert not np.array_equal(sample(model, cfg).points, other)


@pytest.mark.parametrize("steps", [1, 8, 64, 512])
def test_row_count_for_step_counts(steps):
    model = init(Architecture(hidden_width=8), 0, "eps")
    assert len(sample(model, SampleConfig(num_steps=steps, num_samples=37))) == 37


def test_clip_range_bounds_output():
    model = init(Architecture(hidden_width=8), 0, "s")
    pts = sample(model, SampleConfig(num_steps=4, num_samples=500, clip_range=(-0.5, 0.5))).points
    assert pts.min() >= -0.5 and pts.max() <= 0.5


def test_interior_posterior_noise_is_positive():
    for s, t in step_grid(64)[:-1]:
        assert posterior_coeffs(s, t)[2] > 0
