import colorsys

import numpy as np
import pytest

from incarpose import imageproc as ip
from incarpose.errors import InvalidArgumentError


def _naive_bilinear(img, oh, ow):
    # scalar loop over output pixels, half-pixel centers, clamped taps
    h, w, c = img.shape
    out = np.zeros((oh, ow, c))
    for i in range(oh):
        y = min(max((i + 0.5) * h / oh - 0.5, 0.0), h - 1)
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, h - 1)
        fy = y - y0
        for j in range(ow):
            x = min(max((j + 0.5) * w / ow - 0.5, 0.0), w - 1)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, w - 1)
            fx = x - x0
            top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
            bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out


@pytest.mark.parametrize("shape, out", [((7, 5, 1), (3, 11)), ((4, 4, 3), (9, 2)), ((10, 6, 1), (10, 3))])
def test_resize_matches_naive_oracle(rng, shape, out):
    img = rng.uniform(size=shape)
    np.testing.assert_allclose(ip.resize(img, *out), _naive_bilinear(img, *out), atol=1e-12)


def test_resize_constant_is_preserved():
    img = np.full((13, 9, 1), 0.3)
    np.testing.assert_allclose(ip.resize(img, 5, 17), 0.3, atol=1e-15)


def test_zero_pad_640x480():
    assert ip.scaled_size(480, 640, 224, "long") == (168, 224)
    top, left, nh, nw = ip.content_box(480, 640, 224)
    assert (top, left, nh, nw) == (28, 0, 168, 224)
    out = ip.zero_pad_resize(np.ones((480, 640, 1)), 224)
    assert out.shape == (224, 224, 1)
    assert np.all(out[:28] == 0) and np.all(out[-28:] == 0)


def test_zero_pad_square_is_pure_resize(rng):
    img = rng.uniform(size=(16, 16, 1))
    np.testing.assert_array_equal(ip.zero_pad_resize(img, 8), ip.resize(img, 8, 8))


def test_zero_pad_constant_input_mask(rng):
    h, w = int(rng.integers(5, 40)), int(rng.integers(5, 40))
    out = ip.zero_pad_resize(np.full((h, w, 1), 0.7), 24)
    top, left, nh, nw = ip.content_box(h, w, 24)
    mask = np.zeros((24, 24), dtype=bool)
    mask[top : top + nh, left : left + nw] = True
    np.testing.assert_allclose(out[mask], 0.7, atol=1e-14)
    assert np.all(out[~mask] == 0.0)


def test_zero_pad_odd_leftover_goes_bottom_right():
    top, left, nh, nw = ip.content_box(3, 10, 10)
    assert (nh, nw) == (3, 10)
    assert top == 3 and 10 - top - nh == 4


def test_center_crop_640x480():
    assert ip.scaled_size(480, 640, 224, "short") == (224, 299)
    img = np.tile(np.arange(640, dtype=float)[None, :, None] / 640, (480, 1, 1))
    out = ip.center_crop_resize(img, 224)
    assert out.shape == (224, 224, 1)
    scaled = ip.resize(img, 224, 299)
    np.testing.assert_array_equal(out, scaled[:, 37 : 37 + 224])


def test_center_crop_square_is_pure_resize(rng):
    img = rng.uniform(size=(20, 20, 3))
    np.testing.assert_array_equal(ip.center_crop_resize(img, 10), ip.resize(img, 10, 10))


def test_empty_image_rejected():
    with pytest.raises(InvalidArgumentError):
        ip.zero_pad_resize(np.zeros((0, 4)), 8)


def test_normalize_examples(rng):
    img = rng.uniform(size=(4, 5, 3))
    np.testing.assert_array_equal(ip.normalize(img, 0.0, 1.0), img)
    const = np.tile(np.array(ip.IMAGENET_MEAN)[None, None], (3, 3, 1))
    np.testing.assert_allclose(ip.normalize(const, ip.IMAGENET_MEAN, ip.IMAGENET_STD), 0.0, atol=1e-15)
    back = ip.denormalize(ip.normalize(img, ip.IMAGENET_MEAN, ip.IMAGENET_STD), ip.IMAGENET_MEAN, ip.IMAGENET_STD)
    np.testing.assert_allclose(back, img, atol=1e-15)


def test_normalize_after_padding():
    cfg = ip.PreprocessConfig(target_size=8, mean=(0.5,), std=(0.25,))
    out = ip.preprocess(np.ones((4, 8, 1)), cfg)
    assert out[0, 0, 0] == pytest.approx(-2.0)
    assert out[4, 4, 0] == pytest.approx(2.0)


def test_jitter_identity(rng):
    img = rng.uniform(size=(6, 6, 3))
    np.testing.assert_array_equal(ip.color_jitter(img, ip.JitterConfig(), 5), img)


def test_jitter_deterministic(rng):
    img = rng.uniform(size=(6, 6, 3))
    cfg = ip.JitterConfig(0.4, 0.4, 0.4, 0.1)
    a = ip.color_jitter(img, cfg, 11)
    b = ip.color_jitter(img, cfg, 11)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, ip.color_jitter(img, cfg, 12))


def test_brightness_factor_two():
    out = ip.apply_jitter(np.full((3, 3, 1), 0.25), 2.0, 1.0, 1.0, 0.0)
    np.testing.assert_array_equal(out, 0.5)


def test_jitter_factors_within_range():
    cfg = ip.JitterConfig(0.3, 0.2, 0.1, 0.05)
    for s in range(200):
        b, c, sat, h = ip.sample_jitter(cfg, s)
        assert 0.7 <= b <= 1.3 and 0.8 <= c <= 1.2 and 0.9 <= sat <= 1.1 and -0.05 <= h <= 0.05


def test_jitter_output_clamped(rng):
    img = rng.uniform(size=(8, 8, 3))
    out = ip.color_jitter(img, ip.JitterConfig(0.9, 0.9, 0.9, 0.5), 3)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_hue_shift_matches_colorsys(rng):
    img = rng.uniform(size=(5, 5, 3))
    out = ip.apply_jitter(img, 1.0, 1.0, 1.0, 0.2)
    expected = np.array(
        [[colorsys.hsv_to_rgb(*((lambda h, s, v: ((h + 0.2) % 1.0, s, v))(*colorsys.rgb_to_hsv(*px)))) for px in row] for row in img]
    )
    np.testing.assert_allclose(out, expected, atol=1e-12)


@pytest.mark.parametrize("kwargs", [{"brightness": -0.1}, {"contrast": 1.0}, {"hue": 0.6}])
def test_invalid_jitter(kwargs):
    with pytest.raises(InvalidArgumentError):
        ip.JitterConfig(**kwargs)


def test_preprocess_reproducible(rng):
    img = rng.uniform(size=(30, 40, 3))
    cfg = ip.PreprocessConfig(target_size=16, mean=ip.IMAGENET_MEAN, std=ip.IMAGENET_STD,
                              jitter=ip.JitterConfig(0.2, 0.2, 0.2, 0.02), seed=9)
    assert ip.preprocess(img, cfg, 3).tobytes() == ip.preprocess(img, cfg, 3).tobytes()


@pytest.mark.parametrize("channels", [1, 3])
def test_pnm_roundtrip(tmp_path, rng, channels):
    data = rng.integers(0, 256, size=(7, 9, channels)).astype(np.float64) / 255.0
    path = tmp_path / "img.pnm"
    ip.write_pnm(path, data)
    np.testing.assert_array_equal(ip.read_pnm(path), data)
