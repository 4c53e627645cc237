import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from difflab.losses import (
    LossForm,
    discrete_nelbo_term,
    loss_coefficient,
    loss_integrand,
    nelbo_equiv_check,
    rescale_factor,
)
from difflab.schedule import ScheduleDomainError, TargetSpace, alpha_sigma, snr, snr_prime, weight
from difflab.targets import from_x_prediction, noisify, target_for

vec = st.lists(st.floats(-5, 5), min_size=2, max_size=2).map(np.array)


def batch(rng, n=10_000):
    x = rng.normal(size=(n, 2))
    x_hat = x + rng.normal(size=(n, 2))
    eps = rng.normal(size=(n, 2))
    t = rng.uniform(0.01, 0.99, size=n)
    return x, x_hat, eps, t


@pytest.mark.parametrize("form", list(LossForm))
@pytest.mark.parametrize("space", list(TargetSpace))
def test_zero_residual_gives_zero(form, space, rng):
    y = rng.normal(size=2)
    assert loss_integrand(form, space, y, y, 0.37) == 0.0


def test_x_nelbo_example():
    value = loss_integrand("nelbo", "x", np.array([1.0, 0.0]), np.zeros(2), 0.5)
    assert value == pytest.approx(6.2831853072, abs=1e-9)
    assert value == pytest.approx(-snr_prime(0.5), rel=1e-12)


def test_rescale_factor_closed_forms():
    t = 0.3
    a, s = alpha_sigma(t)
    assert rescale_factor("x", t) == 1.0
    assert rescale_factor("eps", t) == pytest.approx(s**2 / a**2, rel=1e-12)
    assert rescale_factor("v", t) == pytest.approx(s**2 / (a**2 + s**2), rel=1e-12)
    assert rescale_factor("s", t) == pytest.approx(s**4 / a**2, rel=1e-12)
    for space in TargetSpace:
        assert rescale_factor(space, t) == pytest.approx(weight("x", t) / weight(space, t), rel=1e-12)


def test_interior_time_required():
    for t in (0.0, 1.0):
        with pytest.raises(ScheduleDomainError):
            loss_coefficient("weighted", "eps", t)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        loss_integrand("weighted", "x", np.zeros(2), np.zeros(3), 0.5)


def test_rescaled_losses_equal_weighted_x(rng):
    x, x_hat, eps, t = batch(rng)
    z = noisify(x, eps, t)
    ref = loss_integrand("weighted", "x", x, x_hat, t)
    for space in (TargetSpace.EPS, TargetSpace.V, TargetSpace.S):
        target = target_for(space, x, eps, t)
        pred = from_x_prediction(space, x_hat, z, t)
        got = loss_integrand("rescaled", space, target, pred, t)
        np.testing.assert_allclose(got, ref, rtol=1e-8)


def test_nelbo_integrands_agree_across_spaces(rng):
    x, x_hat, eps, t = batch(rng)
    vals = nelbo_equiv_check(x, x_hat, eps, t)
    assert vals.shape == (4, len(t))
    spread = (vals.max(axis=0) - vals.min(axis=0)) / vals.max(axis=0)
    assert spread.max() < 1e-8
    expected = -snr_prime(t) * np.sum((x - x_hat) ** 2, axis=1)
    np.testing.assert_allclose(vals[0], expected, rtol=1e-10)


@pytest.mark.parametrize("t", [0.3, 0.9])
def test_nelbo_equiv_single_instance(t, rng):
    x, eps = rng.normal(size=2), rng.normal(size=2)
    x_hat = rng.normal(size=2)
    vals = nelbo_equiv_check(x, x_hat, eps, t)
    assert np.all(np.isfinite(vals))
    np.testing.assert_allclose(vals, vals[0], rtol=1e-8)
    np.testing.assert_array_equal(nelbo_equiv_check(x, x, eps, t), 0.0)


@settings(max_examples=200)
@given(vec, vec, st.floats(0.01, 0.99), st.sampled_from(list(TargetSpace)))
def test_nelbo_times_weight_is_weighted(target, pred, t, space):
    nel = loss_integrand("nelbo", space, target, pred, t)
    wtd = loss_integrand("weighted", space, target, pred, t)
    assert nel >= 0 and wtd >= 0
    assert nel * weight(space, t) == pytest.approx(wtd, rel=1e-10, abs=1e-300)


def test_discrete_term_examples():
    x = np.array([1.0, 0.0])
    assert discrete_nelbo_term(x, x, 0.25, 0.5) == 0.0
    expected = 0.5 * (math.cos(math.pi / 8) ** 2 / math.sin(math.pi / 8) ** 2 - 1.0)
    assert discrete_nelbo_term(x, np.zeros(2), 0.25, 0.5) == pytest.approx(expected, rel=1e-12)
    assert discrete_nelbo_term(x, np.zeros(2), 0.25, 0.5) == pytest.approx(0.5 * (snr(0.25) - 1.0))
    with pytest.raises(ScheduleDomainError):
        discrete_nelbo_term(x, x, 0.5, 0.25)


def discrete_sum(T):
    # x_hat(t) = x - (sigma_t^2, 0) so that ||x - x_hat||^2 = sigma_t^4.
    x = np.zeros(2)
    total = 0.0
    for i in range(2, T + 1):
        s, t = (i - 1) / T, i / T
        _, sig = alpha_sigma(t)
        total += discrete_nelbo_term(x, np.array([sig**2, 0.0]), s, t)
    return total


# 1/2 * integral_0^1 (-SNR') sigma^4 dt = (pi/2) * integral alpha sigma dt = 1/2
EXACT_INTEGRAL = 0.5


def relative_error(T):
    return abs(discrete_sum(T) - EXACT_INTEGRAL) / EXACT_INTEGRAL


def test_discrete_sum_error_decreases_with_T():
    errors = [relative_error(T) for T in (64, 256, 1024, 4096)]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    # first-order convergence: quadrupling T cuts the error about fourfold
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    np.testing.assert_allclose(ratios, 4.0, rtol=0.1)


def test_discrete_sum_within_tenth_percent_at_4096():
    assert relative_error(4096) < 1e-3


def test_loss_form_parse():
    assert LossForm.parse("NELBO") is LossForm.NELBO
    with pytest.raises(ValueError):
        LossForm.parse("huber")
