import math

import numpy as np
import pytest

from app.core.errors import GeometryError, InapplicableDistortionError, ParameterError
from app.models.distortion import ContrastDirection, DistortionKind
from app.services.distortions import photometric as ph
from app.services.distortions.pipeline import DistortionInputs, apply_distortion
from app.services.imaging.core import convolve, gaussian_blur, gaussian_kernel, rgb_to_luma
from tests.conftest import annotation_set, random_objects, rect_object


def _dense_dct(block):
    n = block.shape[0]
    scale = [math.sqrt(1.0 / n)] + [math.sqrt(2.0 / n)] * (n - 1)
    out = np.zeros((n, n))
    for u in range(n):
        for v in range(n):
            total = 0.0
            for x in range(n):
                for y in range(n):
                    total += block[x, y] * math.cos((2 * x + 1) * u * math.pi / (2 * n)) * math.cos((2 * y + 1) * v * math.pi / (2 * n))
            out[u, v] = scale[u] * scale[v] * total
    return out


def _dense_idct(coef):
    n = coef.shape[0]
    scale = [math.sqrt(1.0 / n)] + [math.sqrt(2.0 / n)] * (n - 1)
    out = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            total = 0.0
            for u in range(n):
                for v in range(n):
                    total += scale[u] * scale[v] * coef[u, v] * math.cos((2 * x + 1) * u * math.pi / (2 * n)) * math.cos((2 * y + 1) * v * math.pi / (2 * n))
            out[x, y] = total
    return out


def _blockiness(img):
    luma = rgb_to_luma(img)
    cols = np.abs(luma[:, 8::8] - luma[:, 7:-1:8]).mean()
    rows = np.abs(luma[8::8, :] - luma[7:-1:8, :]).mean()
    return cols + rows


def test_levels_are_validated():
    with pytest.raises(ParameterError):
        ph.gaussian_noise(np.zeros((8, 8, 3)), 0, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        ph.adjust_contrast(np.zeros((8, 8, 3)), 6, ContrastDirection.INCREASE)
    with pytest.raises(ParameterError):
        ph.compression_artifact(np.zeros((8, 8, 3)), True)


def test_noise_statistics():
    img = np.full((256, 256, 3), 0.5)
    out = ph.gaussian_noise(img, 1, np.random.default_rng(0))
    assert abs(out.mean() - 0.5) < 0.002
    assert out.std() == pytest.approx(0.02, rel=0.1)
    strong = ph.gaussian_noise(img, 4, np.random.default_rng(0))
    assert strong.std() > out.std()


def test_noise_is_deterministic():
    img = np.full((16, 16, 3), 0.5)
    a = ph.gaussian_noise(img, 3, np.random.default_rng(21))
    b = ph.gaussian_noise(img, 3, np.random.default_rng(21))
    assert np.array_equal(a, b)


def test_contrast():
    img = np.full((8, 8, 3), 0.9)
    assert ph.adjust_contrast(img, 2, ContrastDirection.DECREASE)[0, 0, 0] == pytest.approx(0.7667, abs=1e-4)
    mid = np.full((8, 8, 3), 0.5)
    for level in range(1, 6):
        for direction in ContrastDirection:
            assert np.allclose(ph.adjust_contrast(mid, level, direction), 0.5)


def test_contrast_grows_with_level(natural_image):
    spreads = [np.abs(ph.adjust_contrast(natural_image, level, "increase") - 0.5).mean() for level in range(1, 6)]
    assert spreads == sorted(spreads)


def test_quantization_table_scaling():
    q50 = ph.quantization_table(50)
    assert q50[0, 1] == ph.LUMINANCE_TABLE[0, 1]
    assert q50[0, 0] == 1.0
    q8 = ph.quantization_table(8)
    assert np.all(q8[1:, 1:] >= q50[1:, 1:])
    assert q8.max() <= 255


def test_uniform_image_survives_compression():
    for value in (0, 17, 128, 250):
        img = np.full((20, 28, 3), value / 255.0)
        for level in range(1, 6):
            out = ph.compression_artifact(img, level)
            assert np.max(np.abs(out - img)) <= 1.0 / 255.0


def test_block_quantization_matches_dense_oracle():
    rng = np.random.default_rng(4)
    table = ph.quantization_table(25)
    for _ in range(10):
        block = rng.uniform(-128, 127, (8, 8))
        coef = _dense_dct(block)
        expected = _dense_idct(np.round(coef / table) * table)
        assert np.allclose(ph.quantize_block(block, table), expected, atol=1e-6, rtol=0)


def test_compression_is_near_idempotent(natural_image):
    # kept away from 0 and 1 so ringing is never clipped
    img = 0.2 + 0.6 * natural_image
    once = ph.compression_artifact(img, 3)
    twice = ph.compression_artifact(once, 3)
    assert np.max(np.abs(twice - once)) <= 1.0 / 255.0


def test_blockiness_grows_with_level():
    texture = gaussian_blur(np.random.default_rng(8).random((256, 256, 3)), 2.0)
    img = 0.1 + 0.8 * (texture - texture.min()) / (texture.max() - texture.min())
    scores = [_blockiness(ph.compression_artifact(img, level)) for level in range(1, 6)]
    assert scores == sorted(scores)


def test_global_motion_blur_ramp():
    img = np.zeros((16, 32, 3))
    img[:, 16:] = 1.0
    out = ph.global_motion_blur(img, 1, 0.0)
    assert np.allclose(out[5, 12:20, 0], [0, 0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.0])


@pytest.mark.parametrize("size", [8, 9, 12, 20])
@pytest.mark.parametrize("angle", [0.0, 33.0, 90.0, 135.0])
def test_global_motion_blur_fits_small_images(size, angle):
    img = np.random.default_rng(size).random((size, size, 3))
    out = ph.global_motion_blur(img, 5, angle)
    assert out.shape == img.shape
    assert not np.array_equal(out, img)


def test_global_motion_blur_through_the_pipeline_on_a_small_image():
    img = np.random.default_rng(0).random((8, 8, 3))
    out = apply_distortion(DistortionKind.GLOBAL_MOTION_BLUR, 4, {"angle": 90.0}, 1, DistortionInputs(image=img))
    assert out.shape == img.shape


def test_global_blurs_keep_constants_and_mean(natural_image):
    flat = np.full((32, 32, 3), 0.35)
    assert np.allclose(ph.global_motion_blur(flat, 5, 33.0), 0.35)
    assert np.allclose(ph.global_defocus_blur(flat, 5), 0.35)
    assert abs(ph.global_motion_blur(natural_image, 2, 120.0).mean() - natural_image.mean()) < 1e-3
    assert abs(ph.global_defocus_blur(natural_image, 2).mean() - natural_image.mean()) < 1e-3


def test_global_defocus_matches_dense_kernel(natural_image):
    expected = convolve(natural_image, gaussian_kernel(ph.DEFOCUS_STD[0]))
    assert np.allclose(ph.global_defocus_blur(natural_image, 1), expected, atol=1e-6, rtol=0)


def test_tone_curve_closed_form_and_table_oracle():
    gains = (0.5, 1.0, 2.0)
    assert ph.tone_curve(np.array(0.5), 1 / 3, 2 / 3, gains) == pytest.approx(2 / 7)

    grid = np.linspace(0.0, 1.0, 30001)
    slopes = np.where(grid < 1 / 3, 0.5, np.where(grid < 2 / 3, 1.0, 2.0))
    table = np.concatenate(([0.0], np.cumsum(slopes[:-1] * np.diff(grid))))
    table /= table[-1]
    assert np.allclose(ph.tone_curve(grid, 1 / 3, 2 / 3, gains), table, atol=1e-3)


def test_tone_curve_is_monotone_and_anchored():
    rng = np.random.default_rng(2)
    grid = np.linspace(0.0, 1.0, 2001)
    for _ in range(50):
        cut, gains = ph.sample_backlight_curve(rng)
        b1, b2 = ph.BACKLIGHT_CUTS[cut]
        curve = ph.tone_curve(grid, b1, b2, gains)
        assert curve[0] == 0.0 and curve[-1] == pytest.approx(1.0)
        assert np.all(np.diff(curve) >= 0)


def test_backlight_identity_gains(natural_image):
    mask = np.zeros(natural_image.shape[:2], bool)
    mask[5:30, 5:40] = True
    spec = ph.BacklightSpec(0.3, 0.75, (1.0, 1.0, 1.0), mask)
    assert np.allclose(ph.apply_backlight(natural_image, spec), natural_image, atol=1e-12)


def test_backlight_only_touches_the_mask(natural_image):
    mask = np.zeros(natural_image.shape[:2], bool)
    mask[10:30, 20:50] = True
    spec = ph.BacklightSpec(0.25, 0.6, (2.2, 0.7, 1.0), mask)
    out = ph.apply_backlight(natural_image, spec)
    changed = np.any(out != natural_image, axis=2)
    assert changed.any()
    assert not np.any(changed & ~mask)


@pytest.mark.parametrize("seed", range(100))
def test_backlight_changes_only_the_target_mask(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((48, 64, 3))
    ann = random_objects(rng, 64, 48)
    spec = ph.sample_backlight_spec(ann, rng)
    changed = np.any(ph.apply_backlight(img, spec) != img, axis=2)
    assert not np.any(changed & ~spec.mask)


def test_backlight_spec_validation(natural_image):
    mask = np.ones((4, 4), bool)
    with pytest.raises(ParameterError):
        ph.BacklightSpec(0.6, 0.3, (1.0, 1.0, 2.0), mask)
    with pytest.raises(ParameterError):
        ph.BacklightSpec(0.3, 0.6, (1.0, 3.0, 2.0), mask)
    empty = ph.BacklightSpec(0.3, 0.6, (1.0, 1.0, 2.0), np.zeros(natural_image.shape[:2], bool))
    with pytest.raises(GeometryError):
        ph.apply_backlight(natural_image, empty)


def test_drawn_gains_reach_the_peak():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        cut, gains = ph.sample_backlight_curve(rng)
        assert 0 <= cut < len(ph.BACKLIGHT_CUTS)
        assert max(gains) >= ph.MIN_PEAK_GAIN
        assert all(0.5 <= g <= 2.5 for g in gains)


def test_backlight_targets_largest_object():
    small = rect_object(1, 2, 2, 5, 5, 64, 48)
    large = rect_object(2, 20, 10, 20, 20, 64, 48, category="car")
    crowd = rect_object(3, 0, 0, 64, 48, 64, 48, iscrowd=True)
    ann = annotation_set(64, 48, small, large, crowd)
    spec = ph.sample_backlight_spec(ann, np.random.default_rng(1))
    assert np.array_equal(spec.mask, large.mask)
    again = ph.sample_backlight_spec(ann, np.random.default_rng(1))
    assert (spec.b1, spec.b2, spec.gains) == (again.b1, again.b2, again.gains)

    only = annotation_set(64, 48, small)
    assert np.array_equal(ph.sample_backlight_spec(only, np.random.default_rng(1)).mask, small.mask)


def test_backlight_needs_a_non_crowd_object():
    with pytest.raises(InapplicableDistortionError):
        ph.sample_backlight_spec(annotation_set(64, 48), np.random.default_rng(0))
    crowd_only = annotation_set(64, 48, rect_object(1, 0, 0, 10, 10, 64, 48, iscrowd=True))
    with pytest.raises(InapplicableDistortionError):
        ph.largest_object(crowd_only)
