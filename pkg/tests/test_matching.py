"""Semi-global block matcher and the observation passthrough."""

import numpy as np
import pytest

from planestereo.imagery import (DisparityImage, Image, SynthConfig,
                                 generate_synthetic)
from planestereo.matching import MatchConfig, match, passthrough


def _textured(h, w, seed):
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 255, (h, w)).astype(np.uint8)
    return Image(base)


def test_identical_pair_zero_disparity():
    img = _textured(40, 60, 0)
    d = match(img, img, MatchConfig(max_disparity=16))
    assert d.valid.any()
    assert np.all(d.values[d.valid] == 0.0)


def test_shifted_pair_recovers_shift():
    left = _textured(50, 90, 1)
    # right = left shifted 5 px left: right[y, x] = left[y, x + 5],
    # so a left pixel at x matches the right pixel at x - 5
    right = Image(np.roll(left.data, -5, axis=1))
    d = match(left, right, MatchConfig(max_disparity=16))
    interior = d.valid.copy()
    interior[:, :8] = False
    interior[:, -8:] = False
    assert interior.sum() > 0.5 * d.values.size
    vals = d.values[interior]
    # mode of the valid interior disparities is the shift
    assert np.median(vals) == pytest.approx(5.0, abs=0.25)
    assert (np.abs(vals - 5.0) <= 1.0).mean() > 0.95


def test_textureless_image_mostly_invalid():
    img = Image(np.full((40, 60), 127, np.uint8))
    d = match(img, img, MatchConfig(max_disparity=16))
    assert d.valid.mean() < 0.20


def test_disparities_within_range():
    left = _textured(30, 80, 2)
    right = Image(np.roll(left.data, -3, axis=1))
    for md in (8, 24):
        d = match(left, right, MatchConfig(max_disparity=md))
        if d.valid.any():
            assert d.values[d.valid].min() >= 0.0
            assert d.values[d.valid].max() <= md


def test_match_deterministic():
    left = _textured(36, 48, 3)
    right = Image(np.roll(left.data, -4, axis=1))
    a = match(left, right, MatchConfig())
    b = match(left, right, MatchConfig())
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.valid, b.valid)


def test_match_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        match(_textured(20, 30, 4), _textured(20, 31, 4), MatchConfig())


def test_match_config_validation():
    with pytest.raises(ValueError):
        MatchConfig(max_disparity=0)
    with pytest.raises(ValueError):
        MatchConfig(p1=50, p2=20)  # p2 must dominate p1
    with pytest.raises(ValueError):
        MatchConfig(n_paths=6)
    with pytest.raises(ValueError):
        MatchConfig(lr_threshold=-1.0)


def test_four_path_variant_runs():
    left = _textured(30, 50, 5)
    right = Image(np.roll(left.data, -2, axis=1))
    d = match(left, right, MatchConfig(max_disparity=8, n_paths=4))
    vals = d.values[d.valid]
    assert vals.size > 0 and np.median(vals) == pytest.approx(2.0, abs=0.25)


def test_rgb_input_accepted():
    rng = np.random.default_rng(6)
    data = rng.integers(0, 255, (32, 48, 3)).astype(np.uint8)
    left = Image(data)
    right = Image(np.roll(data, -3, axis=1))
    d = match(left, right, MatchConfig(max_disparity=8))
    vals = d.values[d.valid]
    assert vals.size > 0 and np.median(vals) == pytest.approx(3.0, abs=0.25)


# ---------------------------------------------------------------------------
# passthrough


def test_passthrough_identity():
    rng = np.random.default_rng(7)
    vals = rng.uniform(0, 30, (10, 12))
    valid = rng.random((10, 12)) < 0.5
    d = DisparityImage(np.where(valid, vals, 0.0), valid)
    out = passthrough(d)
    np.testing.assert_array_equal(out.values, d.values)
    np.testing.assert_array_equal(out.valid, d.valid)


def test_passthrough_empty_valid():
    d = DisparityImage(np.zeros((5, 5)), np.zeros((5, 5), bool))
    out = passthrough(d)
    assert not out.valid.any()


def test_passthrough_synthetic_zero_noise():
    scene = generate_synthetic(SynthConfig(seed=21, noise_sigma=0.0))
    out = passthrough(scene.sparse_observations)
    sel = out.valid
    np.testing.assert_array_equal(out.values[sel],
                                  scene.gt.disparity.values[sel])
