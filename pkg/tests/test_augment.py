import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepnext.augment import AugmentConfig, mixup, spec_augment, speed_perturb
from sepnext.errors import ConfigError, ShapeError
from sepnext.frontend import Waveform
from sepnext.tensor import Tensor


def _batch(rng, n=3, t=20, f=12):
    # offset keeps every input strictly positive so zeros are unambiguous
    return Tensor(rng.uniform(1.0, 2.0, size=(n, 1, t, f)).astype(np.float32))


def test_spec_augment_zeros_only_inside_stripes(rng):
    x = _batch(rng)
    cfg = AugmentConfig(max_time_width=6, max_freq_width=4)
    out, record = spec_augment(x, cfg, rng, return_stripes=True)
    assert out.shape == x.shape
    for i, rec in enumerate(record):
        mask = np.zeros((20, 12), dtype=bool)
        for start, width in rec["time"]:
            mask[start : start + width, :] = True
        for start, width in rec["freq"]:
            mask[:, start : start + width] = True
        sample = out.array[i, 0]
        assert np.all(sample[mask] == 0.0)
        np.testing.assert_array_equal(sample[~mask], x.array[i, 0][~mask])


def test_spec_augment_leaves_input_untouched(rng):
    x = _batch(rng)
    before = x.array.copy()
    spec_augment(x, AugmentConfig(), rng)
    np.testing.assert_array_equal(x.array, before)


def test_spec_augment_stripe_bounds(rng):
    cfg = AugmentConfig(max_time_width=5, max_freq_width=3)
    x = _batch(rng, n=16)
    _, record = spec_augment(x, cfg, rng, return_stripes=True)
    for rec in record:
        assert len(rec["time"]) <= 2 and len(rec["freq"]) <= 2
        for start, width in rec["time"]:
            assert 0 <= width <= 5 and 0 <= start and start + width <= 20
        for start, width in rec["freq"]:
            assert 0 <= width <= 3 and 0 <= start and start + width <= 12
    # over many samples at least one stripe must actually land
    total = sum(w for rec in record for _, w in rec["time"] + rec["freq"])
    assert total > 0


def test_spec_augment_width_clamped_to_extent(rng):
    # max width far beyond the axis: stripes may blank an axis, never overrun
    x = _batch(rng, n=8, t=4, f=3)
    cfg = AugmentConfig(max_time_width=100, max_freq_width=100)
    out, record = spec_augment(x, cfg, rng, return_stripes=True)
    assert np.all(np.isfinite(out.array))
    for rec in record:
        for start, width in rec["time"]:
            assert start + width <= 4
        for start, width in rec["freq"]:
            assert start + width <= 3


def test_spec_augment_rejects_bad_rank(rng):
    with pytest.raises(ShapeError):
        spec_augment(Tensor(np.ones((3, 4), np.float32)), AugmentConfig(), rng)


def test_augment_config_validation():
    with pytest.raises(ConfigError):
        AugmentConfig(max_time_width=-1)
    with pytest.raises(ConfigError):
        AugmentConfig(mixup_alpha=0.0)


@given(alpha=st.floats(0.05, 5.0), seed=st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_mixup_is_convex_combination(alpha, seed):
    rng = np.random.default_rng(seed)
    xa = Tensor(rng.normal(size=(2, 1, 4, 3)).astype(np.float32))
    xb = Tensor(rng.normal(size=(2, 1, 4, 3)).astype(np.float32))
    ya = rng.integers(0, 2, size=(2, 5)).astype(np.float32)
    yb = rng.integers(0, 2, size=(2, 5)).astype(np.float32)
    x, y, lam = mixup(xa, ya, xb, yb, alpha, rng)
    assert 0.0 <= lam <= 1.0
    np.testing.assert_allclose(
        x.array, lam * xa.array + (1 - lam) * xb.array, rtol=1e-5, atol=1e-6
    )
    np.testing.assert_allclose(y, lam * ya + (1 - lam) * yb, rtol=1e-6)
    # targets stay inside [0, 1] when inputs are indicator vectors
    assert np.all(y >= 0.0) and np.all(y <= 1.0)


def test_mixup_shape_mismatch(rng):
    xa = Tensor(np.ones((2, 1, 4, 3), np.float32))
    xb = Tensor(np.ones((2, 1, 4, 4), np.float32))
    y = np.ones((2, 5), np.float32)
    with pytest.raises(ShapeError):
        mixup(xa, y, xb, y, 0.3, rng)


@given(
    rate=st.sampled_from([0.5, 0.8, 0.9, 1.1, 1.2, 1.5]),
    n=st.integers(50, 400),
    seed=st.integers(0, 2**31 - 1),
)
@settings(max_examples=60, deadline=None)
def test_speed_perturb_preserves_length(rate, n, seed):
    rng = np.random.default_rng(seed)
    w = Waveform(rng.normal(size=n).astype(np.float32), 8000)
    out = speed_perturb(w, rate, rng)
    assert len(out.samples) == n
    assert out.sample_rate == 8000
    assert out.samples.dtype == np.float32


def test_speed_perturb_rate_one_is_identity(rng):
    w = Waveform(np.arange(100, dtype=np.float32), 8000)
    state = rng.bit_generator.state
    out = speed_perturb(w, 1.0, rng)
    assert out is w
    assert rng.bit_generator.state == state  # no randomness consumed


def test_speed_perturb_slow_pads_with_zeros():
    w = Waveform(np.ones(100, np.float32), 8000)
    out = speed_perturb(w, 1.25, np.random.default_rng(7))
    # 100/1.25 = 80 ones survive, 20 zeros of padding
    assert int((out.samples == 0).sum()) == 20
    assert int((out.samples == 1).sum()) == 80


def test_speed_perturb_fast_content_is_cropped_stretch():
    x = np.arange(100, dtype=np.float32)
    out = speed_perturb(Waveform(x, 8000), 0.8, np.random.default_rng(3))
    # every output sample must be one of the stretched source values
    assert np.all(np.isin(out.samples, x))
    # nearest-neighbor stretch is monotone nondecreasing
    assert np.all(np.diff(out.samples) >= 0)


def test_speed_perturb_validation(rng):
    w = Waveform(np.ones(10, np.float32), 8000)
    with pytest.raises(ConfigError):
        speed_perturb(w, 0.0, rng)
    with pytest.raises(ConfigError):
        speed_perturb(w, 100.0, np.random.default_rng(0))
