import numpy as np
import pytest
from scipy.special import erf

from sepnext import ops
from sepnext.errors import ConfigError, ShapeError
from sepnext.ops import ConvSpec, NormParams
from sepnext.tensor import Tensor

from oracles import conv2d_bruteforce

CONV_CASES = [
    # (N, Cin, H, W, Cout, k, stride, pad, groups)
    (2, 3, 6, 5, 4, (3, 3), (1, 1), (1, 1), 1),
    (1, 4, 7, 7, 8, (5, 5), (1, 1), (2, 2), 1),
    (2, 4, 8, 6, 4, (3, 3), (1, 1), (1, 1), 4),  # depthwise K=1
    (1, 3, 9, 9, 6, (7, 7), (1, 1), (3, 3), 3),  # depthwise K=2
    (2, 4, 8, 8, 6, (2, 2), (2, 2), (0, 0), 2),  # grouped strided
    (1, 2, 10, 6, 5, (4, 4), (4, 4), (0, 0), 1),  # patchify
    (1, 3, 5, 5, 4, (1, 1), (1, 1), (0, 0), 1),  # pointwise
    (2, 6, 5, 4, 9, (3, 2), (2, 1), (1, 0), 3),  # anisotropic
]


@pytest.mark.parametrize("case", CONV_CASES)
def test_conv2d_matches_bruteforce(case, rng):
    n, cin, h, w, cout, k, stride, pad, groups = case
    spec = ConvSpec(cin, cout, k, stride, pad, groups)
    x = rng.normal(size=(n, cin, h, w))
    wt = rng.normal(size=spec.weight_shape())
    b = rng.normal(size=cout)
    got = ops.conv2d(Tensor(x), Tensor(wt), Tensor(b), spec)
    want = conv2d_bruteforce(x, wt, b, stride, pad, groups)
    assert got.shape == want.shape
    np.testing.assert_allclose(got.array, want, rtol=1e-12, atol=1e-12)


def test_conv2d_rejects_bad_shapes(rng):
    spec = ConvSpec(3, 4, (3, 3), padding=(1, 1))
    x = Tensor(rng.normal(size=(1, 2, 5, 5)))  # wrong channel count
    w = Tensor(rng.normal(size=spec.weight_shape()))
    b = Tensor(np.zeros(4))
    with pytest.raises(ShapeError):
        ops.conv2d(x, w, b, spec)


def test_conv_spec_validation():
    with pytest.raises(ConfigError):
        ConvSpec(3, 4, (3, 3), groups=2)  # 3 % 2 != 0
    with pytest.raises(ConfigError):
        ConvSpec(4, 4, (0, 3))
    spec = ConvSpec(8, 16, (7, 7), padding=(3, 3), groups=8)
    assert spec.depthwise_multiplier == 2
    assert ConvSpec(8, 16, (3, 3)).depthwise_multiplier is None


def test_conv_spec_param_count_matches_depthwise_formula():
    # depthwise with multiplier K over C channels: C*K*kh*kw weights + C*K biases
    spec = ConvSpec(64, 128, (7, 7), padding=(3, 3), groups=64)
    assert spec.param_count() == 64 * 2 * 49 + 128
    # dense conv: C*9 + C for 1 input channel, kernel 3x3
    dense = ConvSpec(1, 64, (3, 3), padding=(1, 1))
    assert dense.param_count() == 64 * 9 + 64


def test_pointwise_is_1x1_conv(rng):
    x = rng.normal(size=(2, 3, 4, 4))
    w = rng.normal(size=(5, 3, 1, 1))
    b = rng.normal(size=5)
    got = ops.pointwise(Tensor(x), Tensor(w), Tensor(b))
    want = conv2d_bruteforce(x, w, b, (1, 1), (0, 0), 1)
    np.testing.assert_allclose(got.array, want, rtol=1e-12, atol=1e-12)


def _norm_params(c, rng):
    return NormParams(
        gamma=rng.normal(1.0, 0.1, c),
        beta=rng.normal(0.0, 0.1, c),
        running_mean=np.zeros(c),
        running_var=np.ones(c),
    )


def test_batch_norm_training_normalizes_batch(rng):
    x = rng.normal(2.0, 3.0, size=(4, 3, 5, 6))
    p = _norm_params(3, rng)
    y = ops.batch_norm2d(Tensor(x), p, training=True)
    # undo the affine, check zero mean unit variance per channel
    xhat = (y.array - p.beta[None, :, None, None]) / p.gamma[None, :, None, None]
    np.testing.assert_allclose(xhat.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)
    np.testing.assert_allclose(xhat.var(axis=(0, 2, 3)), 1.0, atol=1e-4)


def test_batch_norm_updates_running_stats(rng):
    x = rng.normal(2.0, 3.0, size=(8, 2, 4, 4))
    p = _norm_params(2, rng)
    ops.batch_norm2d(Tensor(x), p, training=True)
    want_mean = 0.9 * 0.0 + 0.1 * x.mean(axis=(0, 2, 3))
    want_var = 0.9 * 1.0 + 0.1 * x.var(axis=(0, 2, 3))
    np.testing.assert_allclose(p.running_mean, want_mean, rtol=1e-5)
    np.testing.assert_allclose(p.running_var, want_var, rtol=1e-5)


def test_batch_norm_eval_uses_running_stats(rng):
    x = rng.normal(size=(2, 2, 3, 3))
    p = _norm_params(2, rng)
    p.running_mean[:] = [1.0, -1.0]
    p.running_var[:] = [4.0, 0.25]
    y = ops.batch_norm2d(Tensor(x), p, training=False)
    inv = 1.0 / np.sqrt(p.running_var + p.eps)
    want = (x - p.running_mean[None, :, None, None]) * (p.gamma * inv)[
        None, :, None, None
    ] + p.beta[None, :, None, None]
    np.testing.assert_allclose(y.array, want, rtol=1e-6)


def test_layer_norm_normalizes_channel_vectors(rng):
    x = rng.normal(3.0, 2.0, size=(2, 8, 4, 5))
    gamma = np.ones(8)
    beta = np.zeros(8)
    y = ops.layer_norm_channels(Tensor(x), gamma, beta)
    np.testing.assert_allclose(y.array.mean(axis=1), 0.0, atol=1e-6)
    np.testing.assert_allclose(y.array.var(axis=1), 1.0, atol=1e-3)


def test_layer_norm_rank2(rng):
    x = rng.normal(size=(3, 6))
    gamma = rng.normal(1.0, 0.1, 6)
    beta = rng.normal(0.0, 0.1, 6)
    y2 = ops.layer_norm_channels(Tensor(x), gamma, beta)
    y4 = ops.layer_norm_channels(Tensor(x[:, :, None, None]), gamma, beta)
    np.testing.assert_allclose(y2.array, y4.array[:, :, 0, 0], rtol=1e-6)


def test_gelu_matches_gaussian_cdf_definition(rng):
    x = rng.normal(size=(4, 5)) * 3
    y = ops.gelu(Tensor(x))
    want = x * 0.5 * (1 + erf(x / np.sqrt(2)))
    np.testing.assert_allclose(y.array, want, rtol=1e-12)
    # spot values: gelu(0) = 0, gelu(large) ~ identity, gelu(-large) ~ 0
    big = ops.gelu(Tensor(np.array([0.0, 10.0, -10.0])))
    np.testing.assert_allclose(big.array, [0.0, 10.0, 0.0], atol=1e-8)


def test_relu_and_sigmoid(rng):
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(ops.relu(Tensor(x)).array, [0, 0, 0, 0.5, 2.0])
    s = ops.sigmoid(Tensor(x)).array
    np.testing.assert_allclose(s, 1.0 / (1.0 + np.exp(-x)), rtol=1e-7)
    # extreme logits stay finite and inside (0, 1)
    s2 = ops.sigmoid(Tensor(np.array([-1000.0, 1000.0]))).array
    assert np.all(np.isfinite(s2))
    assert 0.0 <= s2[0] < 1e-30 and 1.0 - 1e-7 < s2[1] <= 1.0


def test_avg_pool_2x2_even(rng):
    x = rng.normal(size=(2, 3, 4, 6))
    y = ops.avg_pool2x2(Tensor(x))
    assert y.shape == (2, 3, 2, 3)
    want = x.reshape(2, 3, 2, 2, 3, 2).mean(axis=(3, 5))
    np.testing.assert_allclose(y.array, want, rtol=1e-6)


def test_avg_pool_2x2_odd_drops_trailing(rng):
    x = rng.normal(size=(1, 1, 5, 7))
    y = ops.avg_pool2x2(Tensor(x))
    assert y.shape == (1, 1, 2, 3)
    np.testing.assert_allclose(
        y.array, ops.avg_pool2x2(Tensor(x[:, :, :4, :6])).array, rtol=1e-6
    )


def test_global_pool_gap(rng):
    x = rng.normal(size=(2, 4, 3, 5))
    y = ops.global_pool(Tensor(x), "gap")
    np.testing.assert_allclose(y.array, x.mean(axis=(2, 3)), rtol=1e-6)


def test_global_pool_pann(rng):
    x = rng.normal(size=(2, 4, 6, 5))
    y = ops.global_pool(Tensor(x), "pann")
    t = x.mean(axis=3)
    np.testing.assert_allclose(y.array, t.mean(axis=2) + t.max(axis=2), rtol=1e-6)
    with pytest.raises(ConfigError):
        ops.global_pool(Tensor(x), "nope")


def test_linear(rng):
    x = rng.normal(size=(3, 7))
    w = rng.normal(size=(4, 7))
    b = rng.normal(size=4)
    y = ops.linear(Tensor(x), Tensor(w), Tensor(b))
    np.testing.assert_allclose(y.array, x @ w.T + b, rtol=1e-10)


def test_drop_path_inference_identity(rng):
    x = Tensor(rng.normal(size=(4, 3, 2, 2)))
    y = ops.drop_path(x, 0.5, training=False)
    assert y is x


def test_drop_path_training_zeroes_whole_samples(rng):
    x = Tensor(np.ones((1000, 2, 1, 1)))
    y = ops.drop_path(x, 0.3, training=True, rng=rng)
    per_sample = y.array.reshape(1000, -1)
    kept = per_sample[:, 0] != 0.0
    # kept samples are scaled by 1/(1-p); dropped are exactly zero
    np.testing.assert_allclose(per_sample[kept], 1.0 / 0.7, rtol=1e-6)
    np.testing.assert_allclose(per_sample[~kept], 0.0)
    # all features within one sample share fate
    assert np.all((per_sample == 0).all(axis=1) | (per_sample != 0).all(axis=1))
    # keep rate is near 0.7, and the expectation is preserved
    assert abs(kept.mean() - 0.7) < 0.05
    assert abs(y.array.mean() - 1.0) < 0.05


def test_runtime_mac_counter(rng):
    spec = ConvSpec(3, 4, (3, 3), padding=(1, 1))
    x = Tensor(rng.normal(size=(2, 3, 5, 5)))
    w = Tensor(rng.normal(size=spec.weight_shape()))
    b = Tensor(np.zeros(4))
    with ops.runtime_macs as counter:
        ops.conv2d(x, w, b, spec)
        assert counter.count == spec.macs(5, 5, batch=2)
    assert not ops.runtime_macs.enabled
