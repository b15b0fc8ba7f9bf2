import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from desmoke.imagecore import ImagePlane, ImageRgb, ShapeMismatchError
from desmoke.smokesim import (
    IntensityTier,
    SmokeConfig,
    SmokeParams,
    apply_smoke,
    composite,
    decomposite,
    perlin_mask,
    sample_intensity,
    smoke_pair,
    transmission,
)


def test_mask_deterministic_and_normalized():
    p = SmokeParams(0.5, seed=99)
    a = perlin_mask(40, 56, p)
    b = perlin_mask(40, 56, p)
    assert np.array_equal(a.data, b.data)
    assert a.data.min() == 0.0 and a.data.max() == 1.0
    assert not np.array_equal(a.data, perlin_mask(40, 56, SmokeParams(0.5, seed=100)).data)


def test_single_pixel_mask_is_degenerate_zero():
    assert perlin_mask(1, 1, SmokeParams(0.5)).data[0, 0] == 0.0


def mean_abs_gradient(m):
    return np.abs(np.diff(m, axis=0)).mean() + np.abs(np.diff(m, axis=1)).mean()


def test_more_octaves_rougher():
    for seed in range(20):
        smooth = perlin_mask(64, 64, SmokeParams(0.5, seed=seed, octaves=1)).data
        rough = perlin_mask(64, 64, SmokeParams(0.5, seed=seed, octaves=6)).data
        assert mean_abs_gradient(smooth) < mean_abs_gradient(rough), seed


def test_smoke_params_validation():
    with pytest.raises(ValueError):
        SmokeParams(0.0)
    with pytest.raises(ValueError):
        SmokeParams(1.2)
    with pytest.raises(ValueError):
        SmokeParams(0.5, atmospheric_light=(1.1, 0.5, 0.5))
    with pytest.raises(ValueError):
        SmokeParams(0.5, persistence=1.0)
    assert SmokeParams.from_dict(SmokeParams(0.5, seed=3).to_dict()) == SmokeParams(0.5, seed=3)


def test_transmission_examples():
    np.testing.assert_allclose(transmission(ImagePlane.full(3, 3, 0.0), 0.7).data, 0.7, rtol=1e-7)
    assert np.all(transmission(ImagePlane.full(3, 3, 1.0), 0.7).data == 0)
    np.testing.assert_allclose(transmission(ImagePlane.full(3, 3, 0.5), 0.8).data, 0.4, rtol=1e-7)
    with pytest.raises(ValueError):
        transmission(ImagePlane.full(3, 3, 0.5), 0.0)


def test_composite_examples(rng):
    J = ImageRgb(rng.random((6, 6, 3)))
    assert np.array_equal(composite(J, ImagePlane.full(6, 6, 1.0), (0.9, 0.9, 0.9)).data, J.data)
    A = (0.2, 0.5, 0.8)
    out = composite(J, ImagePlane.full(6, 6, 0.0), A).data
    np.testing.assert_array_equal(out, np.broadcast_to(np.float32(A), out.shape))
    out = composite(ImageRgb.full(2, 2, 0.2), ImagePlane.full(2, 2, 0.5), (1.0, 1.0, 1.0))
    np.testing.assert_allclose(out.data, 0.6, rtol=1e-6)
    with pytest.raises(ShapeMismatchError):
        composite(J, ImagePlane.full(5, 6, 0.5), A)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**32))
def test_composite_affine_in_image(alpha, seed):
    r = np.random.default_rng(seed)
    J1, J2 = r.random((5, 5, 3)), r.random((5, 5, 3))
    t = ImagePlane(r.random((5, 5)))
    A = tuple(r.random(3))
    mixed = composite(ImageRgb(alpha * J1 + (1 - alpha) * J2), t, A).data.astype(np.float64)
    parts = alpha * composite(ImageRgb(J1), t, A).data + (1 - alpha) * composite(ImageRgb(J2), t, A).data
    assert np.max(np.abs(mixed - parts)) <= 1e-6


def test_sample_intensity_tiers():
    assert 0.40 <= sample_intensity(IntensityTier.LOW, 1) <= 0.55
    assert 0.77 <= sample_intensity(IntensityTier.HIGH, 1) <= 0.92
    assert sample_intensity(IntensityTier.MEDIUM, 5) == sample_intensity(IntensityTier.MEDIUM, 5)
    assert IntensityTier.parse("High") is IntensityTier.HIGH
    with pytest.raises(ValueError):
        IntensityTier.parse("extreme")


def test_smoke_pair_reproducible(rng):
    J = ImageRgb(rng.random((32, 32, 3)))
    I, params = smoke_pair(J, IntensityTier.MEDIUM, 1234, SmokeConfig(jitter_light=True))
    assert np.array_equal(apply_smoke(J, params).data, I.data)
    I2, params2 = smoke_pair(J, IntensityTier.MEDIUM, 1234, SmokeConfig(jitter_light=True))
    assert params2 == params and np.array_equal(I2.data, I.data)
    assert all(0.85 <= a <= 1.0 for a in params.atmospheric_light)


def test_bright_smoke_brightens():
    J = ImageRgb.full(32, 32, 0.5)
    for seed in range(50):
        I, params = smoke_pair(J, list(IntensityTier)[seed % 3], seed)
        assert min(params.atmospheric_light) >= J.data.max()
        assert I.data.mean() >= J.data.mean()


def test_decomposite_recovers_clear(rng):
    J = ImageRgb(rng.random((48, 48, 3)))
    for seed in range(10):
        I, params = smoke_pair(J, IntensityTier.LOW, seed)
        t = transmission(perlin_mask(48, 48, params), params.intensity)
        ok = t.data >= 0.08
        rec = decomposite(I, t, params.atmospheric_light)
        assert np.max(np.abs(rec - J.data)[ok]) <= 1e-5
