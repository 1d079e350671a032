import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from motionseg import network
from motionseg.network import NetworkConfig

from oracles import (
    conv2d_full_height,
    flatten_2d_kernel,
    naive_conv,
    numeric_gradient,
    random_coordinates,
    relative_error,
)

SMALL = NetworkConfig(w=3, J=2, K=3, C=3)


def _random_params(config, rng, scale=1.0):
    p = network.init_params(config, int(rng.integers(1 << 30)))
    for k in p:
        if k.startswith("b"):
            p[k] = rng.normal(0, 0.1 * scale, size=p[k].shape)
    return p


# -- config ----------------------------------------------------------------


@pytest.mark.parametrize("kw", [dict(w=2), dict(w=0), dict(K=1), dict(C=0), dict(J=0)])
def test_config_rejects_invalid(kw):
    with pytest.raises(ValueError):
        NetworkConfig(**kw)


def test_dilation_schedule():
    cfg = NetworkConfig(w=3)
    assert [cfg.dilation(l) for l in range(1, 6)] == [1, 3, 9, 27, 81]


# -- conv_temporal -----------------------------------------------------------


def test_conv_identity_kernel(rng):
    x = rng.normal(size=(1, 9))
    out = network.conv_temporal(x, np.ones((1, 1, 1)), np.zeros(1), 1)
    np.testing.assert_array_equal(out, x)


def test_conv_hand_example_d1():
    x = np.array([[1.0, 2, 3, 4, 5]])
    k = np.array([[[1.0, 0, -1]]])
    out = network.conv_temporal(x, k, np.zeros(1), 1)
    np.testing.assert_array_equal(out, [[-2, -2, -2, -2, 4]])
    np.testing.assert_array_equal(naive_conv(x, k, np.zeros(1), 1), out)


def test_conv_hand_example_d2():
    x = np.array([[1.0, 2, 3, 4, 5]])
    k = np.array([[[1.0, 0, -1]]])
    out = network.conv_temporal(x, k, np.zeros(1), 2)
    np.testing.assert_array_equal(out, [[-3, -4, -4, 2, 3]])


def test_conv_dilation_wider_than_sequence(rng):
    x = rng.normal(size=(2, 4))
    k = rng.normal(size=(3, 2, 3))
    out = network.conv_temporal(x, k, np.zeros(3), 27)
    # only the centre tap ever lands inside the sequence
    np.testing.assert_allclose(out, k[:, :, 1] @ x, atol=1e-14)


def test_conv_shape_mismatch(rng):
    with pytest.raises(ValueError):
        network.conv_temporal(rng.normal(size=(2, 5)), rng.normal(size=(1, 3, 3)), np.zeros(1), 1)


@settings(max_examples=40, deadline=None)
@given(
    c_in=st.integers(1, 4), c_out=st.integers(1, 4), T=st.integers(1, 30),
    w=st.sampled_from([1, 3, 5]), d=st.integers(1, 12), seed=st.integers(0, 2**31),
)
def test_conv_matches_naive_oracle(c_in, c_out, T, w, d, seed):
    r = np.random.default_rng(seed)
    x, k, b = r.normal(size=(c_in, T)), r.normal(size=(c_out, c_in, w)), r.normal(size=c_out)
    np.testing.assert_allclose(network.conv_temporal(x, k, b, d), naive_conv(x, k, b, d), atol=1e-12, rtol=0)


# -- layer 1 ---------------------------------------------------------------


def test_layer1_zero_image():
    cfg = NetworkConfig(w=3, J=4, K=2, C=5)
    p = network.init_params(cfg, 0)
    out = network.layer1_forward(np.zeros((3, 4, 11)), p, cfg)
    np.testing.assert_array_equal(out, 0)


@pytest.mark.parametrize("T", [1, 2, 17])
def test_layer1_matches_2d_conv(rng, T):
    cfg = NetworkConfig(w=5, J=3, K=2, C=4)
    kernel2d = rng.normal(size=(cfg.C, 3, cfg.J, cfg.w))
    bias = rng.normal(size=cfg.C)
    image = rng.uniform(size=(3, cfg.J, T))
    p = network.init_params(cfg, 0)
    p["w1"], p["b1"] = flatten_2d_kernel(kernel2d), bias
    out = network.layer1_forward(image, p, cfg)
    assert out.shape == (cfg.C, T)
    np.testing.assert_allclose(out, conv2d_full_height(image, kernel2d, bias), atol=1e-12, rtol=0)


def test_layer1_joint_mismatch():
    cfg = NetworkConfig(w=3, J=4, K=2, C=5)
    with pytest.raises(ValueError, match="J=4"):
        network.layer1_forward(np.zeros((3, 5, 6)), network.init_params(cfg, 0), cfg)


# -- activations -----------------------------------------------------------


def test_normalized_relu_examples():
    out = network.normalized_relu(np.array([[2.0, -1], [1, -3], [0, -2]]), 1e-5)
    np.testing.assert_allclose(out[:, 0], [2 / (2 + 1e-5), 1 / (2 + 1e-5), 0], rtol=1e-15)
    np.testing.assert_array_equal(out[:, 1], 0)


@given(arrays(np.float64, (4, 6), elements=st.floats(-1e6, 1e6)))
def test_normalized_relu_bounds(x):
    out = network.normalized_relu(x, 1e-5)
    assert out.min() >= 0 and out.max() < 1


def test_softmax_examples():
    np.testing.assert_allclose(network.softmax_per_frame(np.zeros((4, 3))), 0.25)
    p = network.softmax_per_frame(np.log([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(p[:, 0], [1 / 6, 2 / 6, 3 / 6], rtol=1e-14)


@given(arrays(np.float64, (5, 7), elements=st.floats(-700, 700)), st.floats(-100, 100))
def test_softmax_columns_sum_to_one_and_shift_invariant(logits, c):
    p = network.softmax_per_frame(logits)
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-9)
    np.testing.assert_allclose(network.softmax_per_frame(logits + c), p, atol=1e-12)


# -- forward / predict -----------------------------------------------------


@pytest.mark.parametrize("T", [1, 10, 1500])
def test_forward_zero_params(T):
    cfg = NetworkConfig(w=3, J=19, K=10, C=8)
    logits, _ = network.forward(network.zero_params(cfg), np.full((3, 19, T), 0.3), cfg)
    assert logits.shape == (10, T)
    np.testing.assert_array_equal(logits, 0)
    np.testing.assert_array_equal(network.softmax_per_frame(logits), 0.1)
    np.testing.assert_array_equal(network.predict(network.zero_params(cfg), np.zeros((3, 19, T)), cfg), 0)


@pytest.mark.parametrize("T", [1, 10, 1500])
def test_forward_width_preserved(rng, T):
    cfg = NetworkConfig(w=3, J=19, K=10, C=8)
    logits, cache = network.forward(network.init_params(cfg, 1), rng.uniform(size=(3, 19, T)), cfg)
    assert logits.shape == (10, T)
    assert all(z.shape == (8, T) for z in cache["pre"])


def test_predict_invariant_to_increasing_affine_map(rng):
    cfg = NetworkConfig(w=3, J=2, K=4, C=5)
    p = _random_params(cfg, rng)
    x = rng.uniform(size=(3, 2, 30))
    base = network.predict(p, x, cfg)
    q = dict(p, wh=p["wh"] * 3.7, bh=p["bh"] * 3.7 + 11.0)
    np.testing.assert_array_equal(network.predict(q, x, cfg), base)
    assert base.shape == (30,)


def test_predict_ties_go_to_lowest_class():
    cfg = NetworkConfig(w=1, J=1, K=3, C=1)
    p = network.zero_params(cfg)
    p["bh"] = np.array([0.0, 1.0, 1.0])
    np.testing.assert_array_equal(network.predict(p, np.zeros((3, 1, 4)), cfg), 1)


def test_locality_probe(rng):
    cfg = NetworkConfig(w=3, J=2, K=3, C=4)
    p = _random_params(cfg, rng)
    T, t0 = 400, 200
    x = rng.uniform(size=(3, 2, T))
    y = x.copy()
    y[:, :, t0] = rng.uniform(size=(3, 2))
    diff = np.abs(network.forward(p, y, cfg)[0] - network.forward(p, x, cfg)[0]).max(axis=0)
    reach = (cfg.w**5 - 1) // 2
    assert reach == 121
    assert np.all(diff[: t0 - reach] == 0) and np.all(diff[t0 + reach + 1 :] == 0)
    assert diff[t0 - reach : t0 + reach + 1].max() > 0


def test_shift_equivariance(rng):
    cfg = NetworkConfig(w=3, J=2, K=3, C=4)
    p = _random_params(cfg, rng)
    T, s, reach = 330, 17, 121
    x = rng.uniform(size=(3, 2, T))
    shifted = np.concatenate([rng.uniform(size=(3, 2, s)), x[:, :, : T - s]], axis=2)
    a = network.forward(p, x, cfg)[0]
    b = network.forward(p, shifted, cfg)[0]
    for t in range(s + reach, T - reach):
        np.testing.assert_allclose(b[:, t], a[:, t - s], atol=1e-12, rtol=0)


def test_forward_deterministic_across_threads(rng):
    cfg = NetworkConfig(w=3, J=4, K=5, C=16)
    p = _random_params(cfg, rng)
    x = rng.uniform(size=(3, 4, 250))
    labels = rng.integers(0, 5, size=250)
    ref_loss, ref_grads = network.loss_and_gradients(p, x, labels, cfg)
    results = [None] * 4

    def work(i):
        results[i] = network.loss_and_gradients(p, x, labels, cfg)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for value, grads in results:
        assert value == ref_loss
        assert all(grads[k].tobytes() == ref_grads[k].tobytes() for k in grads)


# -- loss / gradients --------------------------------------------------------


def test_zero_params_loss_is_log_k():
    cfg = NetworkConfig(w=3, J=2, K=7, C=3)
    value, grads = network.loss_and_gradients(
        network.zero_params(cfg), np.full((3, 2, 9), 0.5), np.arange(9) % 7, cfg
    )
    assert abs(value - math.log(7)) <= 1e-12
    assert set(grads) == set(network.param_shapes(cfg))


def test_labels_out_of_range():
    with pytest.raises(ValueError):
        network.loss_and_gradients(network.zero_params(SMALL), np.zeros((3, 2, 3)), [0, 1, 3], SMALL)


def test_gradient_check(rng):
    p = _random_params(SMALL, rng)
    x = rng.uniform(size=(3, SMALL.J, 7))
    labels = rng.integers(0, SMALL.K, size=7)
    _, grads = network.loss_and_gradients(p, x, labels, SMALL)
    for name, idx in random_coordinates(p, 120, rng):
        num = numeric_gradient(p, x, labels, SMALL, name, idx)
        assert relative_error(grads[name][idx], num) <= 1e-4, (name, idx, grads[name][idx], num)


def test_single_frame_only_centre_taps_learn(rng):
    p = _random_params(SMALL, rng)
    for l in range(1, 6):
        p[f"b{l}"] = np.full(SMALL.C, 0.5)  # keep every unit active at T=1
    x = rng.uniform(size=(3, SMALL.J, 1))
    labels = np.array([1])
    _, grads = network.loss_and_gradients(p, x, labels, SMALL)
    for l in range(1, 6):
        g = grads[f"w{l}"]
        np.testing.assert_array_equal(g[:, :, 0], 0)
        np.testing.assert_array_equal(g[:, :, 2], 0)
        idx = (0, 0, 0)
        assert numeric_gradient(p, x, labels, SMALL, f"w{l}", idx) == pytest.approx(0, abs=1e-12)
    for l in range(1, 6):
        assert np.abs(grads[f"w{l}"][:, :, 1]).max() > 0


# -- init / sizes ----------------------------------------------------------


def test_init_deterministic_and_zero_bias():
    cfg = NetworkConfig(w=3, J=5, K=4, C=6)
    a, b = network.init_params(cfg, 42), network.init_params(cfg, 42)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert all(np.all(a[k] == 0) for k in a if k.startswith("b"))
    assert any(a[k].tobytes() != network.init_params(cfg, 43)[k].tobytes() for k in a)


def test_init_bounds():
    cfg = NetworkConfig(w=3, J=5, K=4, C=6)
    p = network.init_params(cfg, 0)
    assert np.abs(p["w1"]).max() <= math.sqrt(6 / (15 * 3))
    assert np.abs(p["w3"]).max() <= math.sqrt(6 / (6 * 3))
    assert np.abs(p["wh"]).max() <= math.sqrt(6 / (6 + 4))


def test_init_layer1_mean_is_zero():
    cfg = NetworkConfig(w=3, J=19, K=10, C=64)
    w1 = network.init_params(cfg, 7)["w1"].ravel()
    assert w1.size >= 10_000
    bound = math.sqrt(6 / (3 * 19 * 3))
    se = bound / math.sqrt(3) / math.sqrt(w1.size)
    assert abs(w1.mean()) <= 3 * se


@pytest.mark.parametrize(
    "w, layers, rfs", [(5, 5, 3125), (1, 5, 1), (3, 5, 243), (3, 1, 3), (7, 2, 49)]
)
def test_receptive_field(w, layers, rfs):
    assert network.receptive_field(w, layers) == rfs == w**layers


def test_count_params():
    assert network.count_params(NetworkConfig(w=3, J=19, K=10, C=64)) == 61066
    assert network.count_params(NetworkConfig(w=1, J=1, K=2, C=1)) == 16


@pytest.mark.parametrize("C, J", [(64, 19), (8, 3), (230, 19)])
def test_count_params_width_difference(C, J):
    a = network.count_params(NetworkConfig(w=5, J=J, K=10, C=C))
    b = network.count_params(NetworkConfig(w=3, J=J, K=10, C=C))
    assert a - b == C * 3 * J * 2 + 4 * C * C * 2
