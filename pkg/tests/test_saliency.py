import numpy as np
import pytest

from jointattn import saliency as S
from jointattn.heatmap import BoundingBox


BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def smooth_then_decimate(img):
    """Direct 5-tap binomial smoothing (edge-replicated) plus 2x decimation."""
    H, W = img.shape
    tmp = np.zeros_like(img)
    for y in range(H):
        for x in range(W):
            acc = 0.0
            for k in range(-2, 3):
                acc += BINOMIAL[k + 2] * img[min(max(y + k, 0), H - 1), x]
            tmp[y, x] = acc
    out = np.zeros_like(img)
    for y in range(H):
        for x in range(W):
            acc = 0.0
            for k in range(-2, 3):
                acc += BINOMIAL[k + 2] * tmp[y, min(max(x + k, 0), W - 1)]
            out[y, x] = acc
    return out[::2, ::2]


def disk_image(h, w, cy, cx, radius, color=(1.0, 1.0, 1.0), bg=0.0):
    img = np.full((3, h, w), bg)
    ys, xs = np.ogrid[:h, :w]
    mask = (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2
    for c in range(3):
        img[c][mask] = color[c]
    return img


def test_pyramid_constant_image():
    pyr = S.build_pyramid(np.full((32, 32), 0.7), 5)
    assert len(pyr) == 5
    for lvl in pyr.levels:
        np.testing.assert_allclose(lvl, 0.7, atol=1e-12)


def test_pyramid_single_level_is_source():
    img = np.random.default_rng(0).random((16, 16))
    pyr = S.build_pyramid(img, 1)
    np.testing.assert_array_equal(pyr[0], img)


def test_pyramid_impulse_matches_direct_filter():
    img = np.zeros((16, 16))
    img[8, 8] = 1.0
    pyr = S.build_pyramid(img, 2)
    np.testing.assert_allclose(pyr[1], smooth_then_decimate(img), atol=1e-12)


def test_pyramid_too_small_rejected():
    with pytest.raises(ValueError):
        S.build_pyramid(np.zeros((8, 8)), 5)


def test_center_surround_constant_is_zero():
    pyr = S.build_pyramid(np.full((64, 64), 0.3), 6)
    np.testing.assert_allclose(S.center_surround(pyr, 2, 5), 0.0, atol=1e-12)


def test_center_surround_responds_at_disk():
    img = disk_image(64, 64, 32, 32, 6)[0]
    pyr = S.build_pyramid(img, 6)
    cs = S.center_surround(pyr, 2, 5)
    # response concentrated around the disk (level-2 coords are /4)
    far_corner = cs[:2, :2].mean()
    at_disk = cs[6:10, 6:10].mean()
    assert at_disk > far_corner
    assert cs.max() > 0


def test_center_surround_rejects_bad_levels():
    pyr = S.build_pyramid(np.zeros((32, 32)), 4)
    with pytest.raises(ValueError):
        S.center_surround(pyr, 2, 2)
    with pytest.raises(ValueError):
        S.center_surround(pyr, 3, 9)


def test_normalize_iterative_single_peak_full_strength():
    m = np.zeros((9, 9))
    m[4, 4] = 5.0
    out = S.normalize_iterative(m)
    assert out[4, 4] == 1.0


def test_normalize_iterative_uniform_is_zero():
    np.testing.assert_array_equal(S.normalize_iterative(np.full((5, 5), 2.0)), np.zeros((5, 5)))


def test_normalize_iterative_two_peaks_suppressed():
    single = np.zeros((9, 9))
    single[4, 4] = 1.0
    double = single.copy()
    double[2, 7] = 1.0
    assert S.normalize_iterative(double).max() < S.normalize_iterative(single).max()


def test_normalize_iterative_rejects_negative():
    with pytest.raises(ValueError):
        S.normalize_iterative(np.array([[-1.0, 0.0]]))


def test_saliency_uniform_image_is_zero_and_flagged():
    sal = S.compute_saliency(np.full((3, 64, 64), 0.5))
    assert sal.uniform
    np.testing.assert_array_equal(sal.values, np.zeros((64, 64)))


def test_saliency_disk_argmax_inside_disk():
    img = disk_image(96, 96, 40, 56, 8)
    sal = S.compute_saliency(img)
    y, x = np.unravel_index(np.argmax(sal.values), sal.values.shape)
    assert (y - 40) ** 2 + (x - 56) ** 2 <= 8**2
    assert not sal.uniform


def test_saliency_red_square_wins_over_gray():
    img = np.full((3, 96, 96), 0.0)
    for c in range(3):
        img[c, 20:32, 20:32] = 0.5
        img[c, 64:76, 64:76] = 0.5
    img[0, 20:32, 64:76] = 0.8  # red square, low G/B
    img[1, 20:32, 64:76] = 0.1
    img[2, 20:32, 64:76] = 0.1
    sal = S.compute_saliency(img)
    y, x = np.unravel_index(np.argmax(sal.values), sal.values.shape)
    assert 20 <= y < 32 and 64 <= x < 76


def test_saliency_range_and_determinism():
    rng = np.random.default_rng(4)
    img = rng.random((3, 64, 96))
    a = S.compute_saliency(img)
    b = S.compute_saliency(img)
    assert a.values.min() >= 0.0 and a.values.max() <= 1.0
    assert a.values.max() == 1.0
    assert np.array_equal(a.values, b.values)


def test_saliency_translation_covariance():
    base = disk_image(128, 128, 48, 48, 7)
    moved = disk_image(128, 128, 64, 56, 7)
    ay, ax = np.unravel_index(np.argmax(S.compute_saliency(base).values), (128, 128))
    by, bx = np.unravel_index(np.argmax(S.compute_saliency(moved).values), (128, 128))
    assert abs((by - ay) - 16) <= 2
    assert abs((bx - ax) - 8) <= 2


def test_saliency_rejects_tiny_or_malformed():
    with pytest.raises(ValueError):
        S.compute_saliency(np.zeros((3, 16, 16)))
    with pytest.raises(ValueError):
        S.compute_saliency(np.zeros((64, 64)))


def test_mean_in_box_constant_and_global():
    m = S.SaliencyMap(np.full((20, 30), 0.4))
    assert S.mean_in_box(m, BoundingBox(5, 5, 8, 8)) == pytest.approx(0.4)
    rng = np.random.default_rng(8)
    vals = rng.random((20, 30))
    assert S.mean_in_box(S.SaliencyMap(vals), BoundingBox(0, 0, 30, 20)) == pytest.approx(vals.mean())


def test_mean_in_box_matches_direct_sum():
    rng = np.random.default_rng(12)
    vals = rng.random((24, 24))
    box = BoundingBox(10, 6, 9, 7)
    total, count = 0.0, 0
    for y in range(6, 13):
        for x in range(10, 19):
            total += vals[y, x]
            count += 1
    assert S.mean_in_box(S.SaliencyMap(vals), box) == pytest.approx(total / count, abs=1e-12)


def test_mean_in_box_clips_and_rejects_disjoint():
    vals = np.ones((10, 10))
    assert S.mean_in_box(S.SaliencyMap(vals), BoundingBox(8, 8, 10, 10)) == 1.0
    with pytest.raises(ValueError):
        S.mean_in_box(S.SaliencyMap(vals), BoundingBox(50, 50, 5, 5))
