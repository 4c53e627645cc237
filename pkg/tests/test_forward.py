import numpy as np
import pytest

from difflab.forward import (
    RngState,
    compose_check,
    kl_transition,
    kl_transition_moments,
    make_rng,
    posterior_params,
    sample_marginal,
)
from difflab.losses import discrete_nelbo_term
from difflab.schedule import ScheduleDomainError, alpha_sigma


def test_rng_streams_are_keyed():
    a = make_rng(3, "train", 1).standard_normal(5)
    np.testing.assert_array_equal(a, make_rng(3, "train", 1).standard_normal(5))
    np.testing.assert_array_equal(a, RngState(3, "train", 1).generator().standard_normal(5))
    assert not np.array_equal(a, make_rng(3, "train", 2).standard_normal(5))
    assert not np.array_equal(a, make_rng(3, "eval", 1).standard_normal(5))
    assert not np.array_equal(a, make_rng(4, "train", 1).standard_normal(5))


def test_marginal_at_zero_is_data():
    x = np.array([0.3, -1.2])
    z, eps = sample_marginal(np.tile(x, (10, 1)), 0.0, make_rng(0, "m"))
    np.testing.assert_array_equal(z, np.tile(x, (10, 1)))
    assert eps.shape == (10, 2)


def test_marginal_moments():
    n = 100_000
    x = np.array([1.0, -2.0])
    z, _ = sample_marginal(np.tile(x, (n, 1)), 0.5, make_rng(1, "m"))
    alpha, _ = alpha_sigma(0.5)
    se_mean = np.sqrt(0.5 / n)
    assert np.all(np.abs(z.mean(axis=0) - alpha * x) < 4 * se_mean)
    var = z.var(axis=0, ddof=1)
    assert np.all(np.abs(var - 0.5) < 4 * 0.5 * np.sqrt(2 / (n - 1)))


def test_posterior_degenerate_limit():
    z = np.array([0.4, -0.1])
    p = posterior_params(z, np.array([2.0, 3.0]), 0.6 - 1e-9, 0.6)
    np.testing.assert_allclose(p.mean, z, atol=1e-7)
    assert p.var == pytest.approx(0.0, abs=1e-7)


def test_posterior_worked_example():
    s, t = 0.25, 0.5
    a_s, s_s = alpha_sigma(s)
    a_t, s_t = alpha_sigma(t)
    a_ts = a_t / a_s
    s2_ts = s_t**2 - a_ts**2 * s_s**2
    z, x = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    p = posterior_params(z, x, s, t)
    np.testing.assert_allclose(p.mean, a_ts * s_s**2 / s_t**2 * z + a_s * s2_ts / s_t**2 * x, rtol=1e-12)
    assert p.var == pytest.approx(s2_ts * s_s**2 / s_t**2, rel=1e-12)
    assert p.var > 0


def test_posterior_mean_of_noise_free_latent(rng):
    x = rng.normal(size=2)
    for s, t in [(0.1, 0.2), (0.3, 0.9), (0.5, 1.0)]:
        a_t, _ = alpha_sigma(t)
        a_s, _ = alpha_sigma(s)
        np.testing.assert_allclose(posterior_params(a_t * x, x, s, t).mean, a_s * x, rtol=1e-10, atol=1e-14)


def test_posterior_variance_bound():
    grid = np.linspace(0.01, 1.0, 40)
    for i, s in enumerate(grid):
        for t in grid[i + 1 :]:
            var = posterior_params(np.zeros(2), np.zeros(2), s, t).var
            assert 0.0 <= var <= alpha_sigma(s)[1] ** 2 + 1e-15


def test_posterior_ordering_errors():
    with pytest.raises(ScheduleDomainError):
        posterior_params(np.zeros(2), np.zeros(2), 0.5, 0.5)
    with pytest.raises(ScheduleDomainError):
        posterior_params(np.zeros(2), np.zeros(2), 0.0, 0.5)


def test_kl_routes_agree(rng):
    for _ in range(200):
        s, t = np.sort(rng.uniform(0.01, 1.0, size=2))
        if s == t:
            continue
        x, x_hat = rng.normal(size=2), rng.normal(size=2)
        closed = kl_transition(x, x_hat, s, t)
        assert closed >= 0
        assert closed == discrete_nelbo_term(x, x_hat, s, t)
        assert kl_transition_moments(x, x_hat, s, t) == pytest.approx(closed, rel=1e-10)
    assert kl_transition(np.ones(2), np.ones(2), 0.2, 0.4) == 0.0


def test_kl_monte_carlo_oracle():
    gen = np.random.default_rng(7)
    n = 1_000_000
    for _ in range(10):
        s, t = np.sort(gen.uniform(0.05, 0.95, size=2))
        x, x_hat, z_t = gen.normal(size=2), gen.normal(size=2), gen.normal(size=2)
        p = posterior_params(z_t, x, s, t)
        q = posterior_params(z_t, x_hat, s, t)
        draws = p.mean + np.sqrt(p.var) * gen.standard_normal((n, 2))
        log_ratio = (np.sum((draws - q.mean) ** 2, axis=1) - np.sum((draws - p.mean) ** 2, axis=1)) / (2 * p.var)
        est, se = log_ratio.mean(), log_ratio.std(ddof=1) / np.sqrt(n)
        assert abs(est - kl_transition(x, x_hat, s, t)) < 3 * se


@pytest.mark.parametrize("s", [0.1, 0.4, 0.7])
@pytest.mark.parametrize("dt", [0.05, 0.15, 0.25])
def test_compose_matches_one_step(s, dt):
    t = s + dt
    stats = compose_check(np.array([0.8, -0.5]), s, t, make_rng(11, "compose", int(100 * t)), 100_000)
    assert stats.max_z < 4


def test_compose_same_time_and_zero_data():
    stats = compose_check(np.zeros(2), 0.3, 0.3, make_rng(1, "c"), 100_000)
    assert stats.max_z < 4
    np.testing.assert_allclose(stats.expected_mean, 0.0)
    stats = compose_check(np.array([1.0, 1.0]), 0.3, 0.7, make_rng(2, "c"), 100_000)
    assert stats.expected_var == pytest.approx(alpha_sigma(0.7)[1] ** 2)
    assert stats.max_z < 4
