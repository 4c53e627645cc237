import math

import numpy as np
import pytest

from difflab.denoiser import (
    Architecture,
    CheckpointError,
    DenoiserModel,
    backward,
    forward,
    forward_pass,
    init,
    load_checkpoint,
    save_checkpoint,
    time_features,
)
from difflab.schedule import TargetSpace


def small_model(seed=0, width=8, space="eps"):
    model = init(Architecture(hidden_width=width), seed, space)
    # non-zero biases so the gradient check covers them properly
    gen = np.random.default_rng(seed)
    for b in model.biases:
        b[:] = 0.1 * gen.normal(size=b.shape)
    return model


def off_kink_triples(model, gen, count, margin=1e-3):
    """Random (z, t, upstream) triples whose hidden pre-activations all clear the ReLU kink by ``margin``."""
    zs, ts = [], []
    while len(zs) < count:
        z, t = gen.normal(size=(1, 2)), gen.uniform(size=1)
        _, inputs = forward_pass(model, z, t)
        pre = [inputs[k] @ model.weights[k] + model.biases[k] for k in range(len(model.weights) - 1)]
        if min(np.abs(a).min() for a in pre) > margin:
            zs.append(z[0])
            ts.append(t[0])
    return np.array(zs), np.array(ts), gen.normal(size=(count, 2))


def test_time_features_examples():
    np.testing.assert_allclose(time_features(0.0), [0, 0, 1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(time_features(0.5), [0.5, 0, -1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(time_features(0.25), [0.25, 1, 0, 0, -1], atol=1e-15)
    assert time_features(np.zeros(4)).shape == (4, 5)


def test_parameter_count_default_arch():
    width, d, tdim = 128, 2, 5
    expected = (d + tdim) * width + width
    expected += 5 * (width * width + width)
    expected += width * d + d
    assert expected == 83_842
    arch = Architecture()
    assert arch.num_parameters == expected
    assert sum(p.size for p in init(arch, 0).parameters()) == expected
    assert len(arch.layer_shapes) == 7


def test_zero_parameters_give_zero_output(rng):
    model = init(Architecture(hidden_width=16), 0)
    for p in model.parameters():
        p[...] = 0.0
    out = forward(model, rng.normal(size=(10, 2)), rng.uniform(size=10))
    np.testing.assert_array_equal(out.value, 0.0)
    assert out.space is TargetSpace.EPS


def test_hand_computed_tiny_net():
    arch = Architecture(hidden_width=1, num_layers=2)
    w0 = np.zeros((7, 1))
    w0[0, 0] = 2.0  # z1
    w0[2, 0] = 1.0  # t
    w1 = np.array([[3.0, -1.0]])
    model = DenoiserModel(arch, [w0, w1], [np.array([0.5]), np.array([0.0, 1.0])], "x")
    # hidden = relu(2 * 0.25 + 0.5 + 0.5) = 1.5
    np.testing.assert_allclose(model.predict(np.array([0.25, 9.0]), 0.5), [4.5, -0.5])
    # negative pre-activation is clipped: relu(2 * -1 + 0.5 + 0.5) = 0
    np.testing.assert_allclose(model.predict(np.array([-1.0, 0.0]), 0.5), [0.0, 1.0])


def test_init_is_deterministic_and_bounded():
    a, b = init(Architecture(), 4), init(Architecture(), 4)
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p, q)
    assert all(np.all(bias == 0) for bias in a.biases)
    for w in a.weights[1:-1]:
        assert np.abs(w).max() <= math.sqrt(6 / 256)
    for w, (fi, fo) in zip(a.weights, a.arch.layer_shapes):
        assert np.abs(w).max() <= math.sqrt(6 / (fi + fo))
    assert not np.array_equal(a.weights[0], init(Architecture(), 5).weights[0])


def test_shape_mismatch_errors(rng):
    model = small_model()
    with pytest.raises(ValueError):
        forward(model, np.zeros((3, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        backward(model, np.zeros((3, 2)), np.zeros(3), np.zeros((3, 3)))


def test_zero_upstream_gives_zero_gradient(rng):
    model = small_model()
    g = backward(model, rng.normal(size=(5, 2)), rng.uniform(size=5), np.zeros((5, 2)))
    assert all(np.all(a == 0) for a in g.flat())


def test_backward_is_linear_in_upstream(rng):
    model = small_model()
    z, t, u = rng.normal(size=(6, 2)), rng.uniform(size=6), rng.normal(size=(6, 2))
    g1 = backward(model, z, t, u).flat()
    g2 = backward(model, z, t, 2 * u).flat()
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-15)


def test_gradients_match_finite_differences():
    model = small_model(seed=1)
    gen = np.random.default_rng(2)
    h = 1e-5
    z, t, u = off_kink_triples(model, gen, 100)
    # per-triple analytic gradients, stacked along a leading axis
    analytic = [backward(model, z[i : i + 1], t[i : i + 1], u[i : i + 1]).flat() for i in range(100)]
    worst = 0.0
    for k, p in enumerate(model.parameters()):
        flat = p.reshape(-1)
        grads = np.stack([a[k].reshape(-1) for a in analytic])
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            up = np.sum(model.predict(z, t) * u, axis=1)
            flat[j] = keep - h
            down = np.sum(model.predict(z, t) * u, axis=1)
            flat[j] = keep
            fd = (up - down) / (2 * h)
            scale = np.maximum(np.maximum(np.abs(fd), np.abs(grads[:, j])), 1e-6)
            worst = max(worst, float(np.max(np.abs(fd - grads[:, j]) / scale)))
    assert worst < 1e-4


def test_locally_affine_under_small_perturbations(rng):
    model = small_model(seed=3)
    z, t = rng.normal(size=(50, 2)), rng.uniform(size=50)
    d = 1e-7 * rng.normal(size=(50, 2))
    base = model.predict(z, t)
    one = model.predict(z + d, t) - base
    two = model.predict(z + 2 * d, t) - base
    np.testing.assert_allclose(two, 2 * one, rtol=1e-5, atol=1e-13)


def test_forward_is_pure(rng):
    model = small_model()
    z, t = rng.normal(size=(4, 2)), rng.uniform(size=4)
    snapshot = [p.copy() for p in model.parameters()]
    np.testing.assert_array_equal(model.predict(z, t), model.predict(z, t))
    backward(model, z, t, np.ones((4, 2)))
    for p, q in zip(model.parameters(), snapshot):
        np.testing.assert_array_equal(p, q)


def test_checkpoint_round_trip(tmp_path, rng):
    model = small_model(space="v")
    path = tmp_path / "m.dllm"
    save_checkpoint(model, path)
    blob = path.read_bytes()
    assert blob[:4] == b"DLLM"
    assert len(blob) == 32 + 8 * model.arch.num_parameters
    back = load_checkpoint(path)
    assert back.arch == model.arch and back.predict_space is TargetSpace.V
    for p, q in zip(model.parameters(), back.parameters()):
        np.testing.assert_array_equal(p, q)
    save_checkpoint(back, tmp_path / "again.dllm")
    assert (tmp_path / "again.dllm").read_bytes() == blob


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.dllm"
    bad.write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    model = small_model()
    good = tmp_path / "good.dllm"
    save_checkpoint(model, good)
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(good)


def test_float32_model_tracks_float64(rng):
    model = small_model()
    z, t = rng.normal(size=(20, 2)), rng.uniform(size=20)
    np.testing.assert_allclose(model.astype(np.float32).predict(z, t), model.predict(z, t), rtol=1e-4, atol=1e-5)
