import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from conftest import random_rgb
from desmoke.dcprior import (
    DarkChannelParams,
    GuidedFilterParams,
    box_mean,
    dark_channel,
    guided_coefficients,
    guided_filter,
    guided_filter_array,
    prepare_input,
    refined_dark_channel,
)
from desmoke.imagecore import ImagePlane, ImageRgb, ShapeMismatchError
from desmoke.smokesim import IntensityTier, smoke_pair

rgb_arrays = arrays(
    np.float64, st.tuples(st.integers(3, 12), st.integers(3, 12), st.just(3)), elements=st.floats(0, 1)
)


def test_params_validation():
    with pytest.raises(ValueError):
        DarkChannelParams(4)
    with pytest.raises(ValueError):
        DarkChannelParams(0)
    with pytest.raises(ValueError):
        GuidedFilterParams(2, 0.0)
    with pytest.raises(ValueError):
        GuidedFilterParams(0, 1e-3)


def test_dark_channel_constant():
    out = dark_channel(ImageRgb.full(20, 20, 0.5), DarkChannelParams(15))
    assert np.all(out.data == np.float32(0.5))


def test_dark_channel_pure_red():
    for s in (1, 3, 9):
        assert np.all(dark_channel(ImageRgb.full(12, 12, (1.0, 0.0, 0.0)), DarkChannelParams(s)).data == 0)


def test_dark_channel_center_pixel():
    arr = np.full((3, 3, 3), 0.9)
    arr[1, 1, :] = 0.1
    img = ImageRgb(arr)
    expected = oracles.dark_channel_brute(img.data, 3)
    assert np.all(expected == np.float32(0.1))
    assert np.array_equal(dark_channel(img, DarkChannelParams(3)).data, expected)


def test_dark_channel_kernel_too_large():
    with pytest.raises(ValueError):
        dark_channel(ImageRgb.full(5, 8, 0.2), DarkChannelParams(7))


def test_dark_channel_kernel_one_is_channel_min(rng):
    img = random_rgb(rng, 9, 11)
    assert np.array_equal(dark_channel(img, DarkChannelParams(1)).data, img.data.min(axis=2))


@pytest.mark.parametrize("s", [1, 3, 5])
def test_dark_channel_matches_brute_force(rng, s):
    for _ in range(10):
        img = random_rgb(rng, 12, 10)
        assert np.array_equal(dark_channel(img, DarkChannelParams(s)).data, oracles.dark_channel_brute(img.data, s))


@settings(max_examples=40, deadline=None)
@given(rgb_arrays, st.sampled_from([1, 3]))
def test_dark_channel_below_pixel_minimum(arr, s):
    img = ImageRgb(arr)
    assert np.all(dark_channel(img, DarkChannelParams(s)).data <= img.data.min(axis=2))


@settings(max_examples=40, deadline=None)
@given(rgb_arrays, arrays(np.float64, 1, elements=st.floats(0, 1)))
def test_dark_channel_monotone(arr, shift):
    lo = ImageRgb(arr * shift[0])
    hi = ImageRgb(arr)
    params = DarkChannelParams(3)
    assert np.all(dark_channel(lo, params).data <= dark_channel(hi, params).data)


def test_dark_channel_translation_equivariant(rng):
    s = 5
    big = rng.random((30, 30, 3))
    a = dark_channel(ImageRgb(big[0:24, 0:24]), DarkChannelParams(s)).data
    b = dark_channel(ImageRgb(big[3:27, 2:26]), DarkChannelParams(s)).data
    r = s // 2
    # pixel (y, x) of b is pixel (y+3, x+2) of a; compare interiors only
    assert np.array_equal(b[r : 24 - r - 3, r : 24 - r - 2], a[r + 3 : 24 - r, r + 2 : 24 - r])


def test_box_mean_matches_naive(rng):
    a = rng.random((9, 7))
    for r in (1, 2, 5):
        np.testing.assert_allclose(box_mean(a, r), oracles.box_mean_naive(a, r), atol=1e-12)


def test_guided_filter_self_guidance(rng):
    g = ImagePlane(rng.random((24, 24)))
    out = guided_filter(g, g, GuidedFilterParams(2, 1e-12))
    assert np.max(np.abs(out.data - g.data)) <= 1e-4


def test_guided_filter_constant_guide(rng):
    guide = np.full((12, 12), 0.3)
    p = rng.random((12, 12))
    a, _ = guided_coefficients(guide, p, 2, 1e-3)
    np.testing.assert_allclose(a, 0, atol=1e-9)
    out = guided_filter_array(guide, p, 2, 1e-3)
    np.testing.assert_allclose(out, oracles.guided_filter_naive(guide, p, 2, 1e-3), atol=1e-9)
    np.testing.assert_allclose(out, oracles.box_mean_naive(oracles.box_mean_naive(p, 2), 2), atol=1e-9)


def test_guided_filter_random_matches_naive(rng):
    I = rng.random((16, 16))
    p = rng.random((16, 16))
    out = guided_filter_array(I, p, 2, 1e-3)
    assert np.max(np.abs(out - oracles.guided_filter_naive(I, p, 2, 1e-3))) <= 1e-6


def test_guided_filter_preserves_constant_p(rng):
    I = rng.random((14, 14))
    out = guided_filter_array(I, np.full((14, 14), 0.37), 3, 1e-3)
    np.testing.assert_allclose(out, 0.37, atol=1e-12)


def test_guided_filter_large_eps_tends_to_double_box(rng):
    I = rng.random((12, 12))
    p = rng.random((12, 12))
    out = guided_filter_array(I, p, 1, 1e9)
    np.testing.assert_allclose(out, box_mean(box_mean(p, 1), 1), atol=1e-8)


def test_guided_filter_errors(rng):
    with pytest.raises(ShapeMismatchError):
        guided_filter(ImagePlane(rng.random((4, 4))), ImagePlane(rng.random((4, 5))))


def test_refined_constant_gray():
    out = refined_dark_channel(ImageRgb.full(48, 48, 0.4))
    np.testing.assert_allclose(out.data, 0.4, atol=1e-6)
    assert out.shape == (48, 48)


def test_refined_output_shape(rng):
    img = random_rgb(rng, 33, 47)
    assert refined_dark_channel(img, DarkChannelParams(7), GuidedFilterParams(4, 1e-3)).shape == (33, 47)


def test_smoke_raises_refined_dark_channel():
    from desmoke.dataset import synthetic_clear_frame

    checked = 0
    seed = 0
    while checked < 20:
        J = synthetic_clear_frame(64, seed)
        I, params = smoke_pair(J, list(IntensityTier)[seed % 3], seed)
        seed += 1
        if params.intensity > 0.9:
            continue
        assert refined_dark_channel(I).data.mean() > refined_dark_channel(J).data.mean()
        checked += 1


def test_prepare_input(rng):
    img = random_rgb(rng, 256, 256)
    dcp, gfp = DarkChannelParams(15), GuidedFilterParams(20, 1e-3)
    st4 = prepare_input(img, dcp, gfp, resolution=256)
    assert np.array_equal(st4.rgb.data, img.data)
    assert np.array_equal(st4.guide.data, refined_dark_channel(img, dcp, gfp).data)
    assert np.all(prepare_input(ImageRgb.full(64, 64, 0.0)).guide.data == 0)
    with pytest.raises(ShapeMismatchError):
        prepare_input(random_rgb(rng, 32, 32), resolution=64)
