import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from PIL import Image

from app.core.errors import DimensionError, MissingInputError, ParameterError
from app.services.depth.strata import Stratum, classify_strata
from app.services.distortions.atmos import (
    RainSubmasks,
    apply_fog,
    apply_rain,
    derive_rain_submasks,
    synthesize_fog_mask,
    synthesize_rain_base,
)
from app.services.distortions.mask_sources import DirectoryMasks, ProceduralMasks, mask_source
from app.services.imaging.core import denormalize, screen_blend


def _three_strata(size=64):
    depth = np.tile(np.linspace(0.1, 1.0, size), (size, 1))
    return classify_strata(depth, 0.2)


def test_single_streak_support_is_bounded():
    for seed in range(20):
        base = synthesize_rain_base(np.random.default_rng(seed), 200, 200, 1, 90.0)
        assert 0 < np.count_nonzero(base) <= 120


def test_rain_base_is_deterministic_and_in_range():
    a = synthesize_rain_base(np.random.default_rng(3), 80, 60, 40, 95.0)
    b = synthesize_rain_base(np.random.default_rng(3), 80, 60, 40, 95.0)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_rain_base_needs_a_streak():
    with pytest.raises(ParameterError):
        synthesize_rain_base(np.random.default_rng(0), 10, 10, 0, 90.0)


def test_submasks_of_empty_and_full_base():
    empty = derive_rain_submasks(np.zeros((10, 10)))
    assert not (empty.r_fine.any() or empty.r_mid.any() or empty.r_coarse.any())
    full = derive_rain_submasks(np.ones((10, 10)))
    assert np.array_equal(full.r_coarse, np.ones((10, 10)))
    assert np.array_equal(full.r_fine, np.full((10, 10), 0.5))


def test_submasks_of_thin_streak():
    base = np.zeros((20, 30))
    base[10, 5:25] = 1.0
    subs = derive_rain_submasks(base)
    assert not subs.r_fine.any()
    assert np.array_equal(subs.r_mid, base)
    assert np.flatnonzero(subs.r_coarse[:, 15]).tolist() == [9, 10, 11]


def test_submask_coverage_ordering():
    base = synthesize_rain_base(np.random.default_rng(11), 128, 96, 60, 90.0)
    subs = derive_rain_submasks(base)
    assert subs.r_fine.mean() < subs.r_mid.mean() < subs.r_coarse.mean()


def test_submasks_must_share_size():
    with pytest.raises(DimensionError):
        RainSubmasks(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((5, 4)))


def test_rain_with_empty_masks_is_identity(natural_image):
    strata = classify_strata(np.full(natural_image.shape[:2], 0.5), 0.5)
    zeros = np.zeros(natural_image.shape[:2])
    subs = RainSubmasks(zeros, zeros, zeros)
    assert np.array_equal(apply_rain(natural_image, strata, subs, 0.8), natural_image)


def test_rain_on_foreground_scene():
    img = np.full((16, 16, 3), 0.5)
    strata = classify_strata(np.full((16, 16), 0.5), 0.5)
    zeros = np.zeros((16, 16))
    subs = RainSubmasks(r_fine=zeros, r_mid=zeros, r_coarse=np.full((16, 16), 0.5))
    assert np.allclose(apply_rain(img, strata, subs, 0.8), 0.7)


def test_rain_rejects_alpha_out_of_range(natural_image):
    strata = classify_strata(np.full(natural_image.shape[:2], 0.5), 0.5)
    zeros = np.zeros(natural_image.shape[:2])
    with pytest.raises(ParameterError):
        apply_rain(natural_image, strata, RainSubmasks(zeros, zeros, zeros), 0.5)


@hsettings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.6, 1.0))
def test_rain_equals_three_gated_screen_blends(seed, alpha):
    rng = np.random.default_rng(seed)
    img = rng.random((64, 64, 3))
    strata = _three_strata()
    subs = derive_rain_submasks(rng.random((64, 64)))
    expected = img
    for stratum, sub in ((Stratum.FORE, subs.r_coarse), (Stratum.MIDDLE, subs.r_mid), (Stratum.BACK, subs.r_fine)):
        expected = screen_blend(expected, np.where(strata.mask(stratum), sub, 0.0), alpha)
    out = apply_rain(img, strata, subs, alpha)
    assert np.allclose(out, expected, atol=1e-9, rtol=0)
    assert np.all(out >= img)


def test_fog_mask_range_and_determinism():
    a = synthesize_fog_mask(np.random.default_rng(5), 96, 64)
    b = synthesize_fog_mask(np.random.default_rng(5), 96, 64)
    assert np.array_equal(a, b)
    assert a.min() == pytest.approx(0.3) and a.max() == pytest.approx(1.0)


def test_fog_mask_is_smooth():
    fog = synthesize_fog_mask(np.random.default_rng(9), 512, 512)
    gy, gx = np.gradient(fog)
    assert np.mean(np.abs(gx)) < 0.02
    assert np.mean(np.abs(gy)) < 0.02


def test_fog_arithmetic():
    img = np.full((8, 8, 3), 0.5)
    out = apply_fog(img, np.ones((8, 8)), np.ones((8, 8)))
    assert np.allclose(out, 0.975)
    assert np.all(denormalize(out) == 249)


def test_fog_identity_cases(natural_image):
    shape = natural_image.shape[:2]
    assert np.array_equal(apply_fog(natural_image, np.zeros(shape), np.ones(shape)), natural_image)
    assert np.array_equal(apply_fog(natural_image, np.ones(shape), np.zeros(shape)), natural_image)


@hsettings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_fog_closed_form_with_uniform_fields(seed, farness, density):
    img = np.random.default_rng(seed).random((16, 16, 3))
    out = apply_fog(img, np.full((16, 16), farness), np.full((16, 16), density))
    c = 0.95 * farness * density
    assert np.allclose(out, 1 - (1 - img) * (1 - c), atol=1e-9, rtol=0)
    assert np.all(out >= img)


def test_fog_grows_with_farness():
    img = np.full((1, 50, 3), 0.4)
    depth = np.linspace(0.0, 1.0, 50)[None, :]
    out = apply_fog(img, depth, np.full((1, 50), 0.8))
    assert np.all(np.diff(out[0, :, 0]) > 0)


def test_fog_rejects_mismatched_depth(natural_image):
    with pytest.raises(DimensionError):
        apply_fog(natural_image, np.ones((5, 5)), np.ones(natural_image.shape[:2]))


def test_directory_masks_pick_by_seed(tmp_path):
    for i, value in enumerate((40, 200)):
        Image.fromarray(np.full((10, 10), value, np.uint8)).save(tmp_path / f"fog_{i}.png")
    source = mask_source(fog_dir=str(tmp_path))
    assert isinstance(source, DirectoryMasks)
    a = source.fog(np.random.default_rng(7), 20, 16)
    b = source.fog(np.random.default_rng(7), 20, 16)
    assert a.shape == (16, 20)
    assert np.array_equal(a, b)
    assert np.allclose(a, 40 / 255) or np.allclose(a, 200 / 255)
    rain = source.rain_base(np.random.default_rng(7), 20, 16, 5, 90.0)
    assert rain.shape == (16, 20) and rain.any()


def test_directory_masks_need_files(tmp_path):
    with pytest.raises(MissingInputError):
        DirectoryMasks(rain_dir=str(tmp_path))
    with pytest.raises(MissingInputError):
        DirectoryMasks(fog_dir=str(tmp_path / "missing"))


def test_procedural_is_the_default_source():
    assert isinstance(mask_source(), ProceduralMasks)
