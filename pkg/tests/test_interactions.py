import math

import numpy as np
import pytest

from clickseg.interactions import (
    Click,
    ClickOutOfBounds,
    ClickSet,
    MAP_CAP,
    NEGATIVE,
    POSITIVE,
    encode_clicks,
    incremental_update,
)


def brute_force_map(height, width, clicks):
    """Literal double loop over pixels and clicks; the independent oracle."""
    out = np.empty((height, width), dtype=np.float64)
    for m in range(height):
        for n in range(width):
            best = MAP_CAP
            for c in clicks:
                d = math.sqrt((m - c.row) ** 2 + (n - c.col) ** 2)
                best = min(best, d)
            out[m, n] = best
    return out


def random_click_set(rng, height, width, max_clicks=8):
    n = int(rng.integers(0, max_clicks + 1))
    clicks = ClickSet()
    for _ in range(n):
        c = Click(
            int(rng.integers(0, height)),
            int(rng.integers(0, width)),
            POSITIVE if rng.random() < 0.5 else NEGATIVE,
        )
        clicks = clicks.with_click(c)
    return clicks


def test_single_positive_click_distances():
    pair = encode_clicks(5, 5, ClickSet.of(Click(2, 2, POSITIVE)))
    assert pair.positive_map[2, 2] == 0.0
    assert pair.positive_map[2, 4] == 2.0
    assert pair.positive_map[0, 0] == math.sqrt(8)


def test_empty_polarity_is_all_255():
    pair = encode_clicks(5, 5, ClickSet.of(Click(2, 2, POSITIVE)))
    assert np.all(pair.negative_map == 255.0)
    empty = encode_clicks(4, 4, ClickSet())
    assert np.all(empty.positive_map == 255.0)
    assert np.all(empty.negative_map == 255.0)


def test_truncation_at_255():
    pair = encode_clicks(400, 400, ClickSet.of(Click(0, 0, POSITIVE)))
    assert pair.positive_map[300, 300] == 255.0
    assert math.sqrt(2 * 300**2) > 255


def test_out_of_bounds_click_identifies_offender():
    bad = Click(5, 0, POSITIVE)
    with pytest.raises(ClickOutOfBounds) as exc:
        encode_clicks(5, 5, ClickSet.of(Click(1, 1, NEGATIVE), bad))
    assert exc.value.click == bad


def test_zero_sized_image_rejected():
    with pytest.raises(ValueError):
        encode_clicks(0, 5, ClickSet())


def test_click_validation():
    with pytest.raises(ValueError):
        Click(0, 0, "maybe")
    with pytest.raises(ValueError):
        ClickSet.of(Click(0, 0, POSITIVE), Click(0, 0, POSITIVE))


def test_matches_brute_force_exactly():
    rng = np.random.default_rng(7)
    for _ in range(50):
        h, w = int(rng.integers(1, 33)), int(rng.integers(1, 33))
        clicks = random_click_set(rng, h, w)
        pair = encode_clicks(h, w, clicks)
        np.testing.assert_array_equal(pair.positive_map, brute_force_map(h, w, clicks.positive()))
        np.testing.assert_array_equal(pair.negative_map, brute_force_map(h, w, clicks.negative()))


def test_incremental_first_negative_click_equals_full_encode():
    pair = encode_clicks(8, 8, ClickSet())
    updated = incremental_update(pair, Click(1, 1, NEGATIVE))
    full = encode_clicks(8, 8, ClickSet.of(Click(1, 1, NEGATIVE)))
    np.testing.assert_array_equal(updated.negative_map, full.negative_map)
    np.testing.assert_array_equal(updated.positive_map, full.positive_map)


def test_incremental_duplicate_click_is_noop():
    clicks = ClickSet.of(Click(3, 4, POSITIVE), Click(1, 1, NEGATIVE))
    pair = encode_clicks(10, 10, clicks)
    again = incremental_update(pair, Click(3, 4, POSITIVE))
    np.testing.assert_array_equal(again.positive_map, pair.positive_map)
    np.testing.assert_array_equal(again.negative_map, pair.negative_map)


def test_incremental_equals_reencode_bitwise_randomized():
    rng = np.random.default_rng(123)
    for _ in range(100):
        h = w = 16
        clicks = random_click_set(rng, h, w, max_clicks=6)
        pair = encode_clicks(h, w, clicks)
        extra = Click(int(rng.integers(0, h)), int(rng.integers(0, w)),
                      POSITIVE if rng.random() < 0.5 else NEGATIVE)
        updated = incremental_update(pair, extra)
        full = encode_clicks(h, w, clicks.with_click(extra))
        np.testing.assert_array_equal(updated.positive_map, full.positive_map)
        np.testing.assert_array_equal(updated.negative_map, full.negative_map)


def test_monotone_under_added_clicks():
    rng = np.random.default_rng(5)
    for _ in range(20):
        clicks = random_click_set(rng, 20, 20, max_clicks=5)
        pair = encode_clicks(20, 20, clicks)
        extra = Click(int(rng.integers(0, 20)), int(rng.integers(0, 20)), POSITIVE)
        updated = incremental_update(pair, extra)
        assert np.all(updated.positive_map <= pair.positive_map)
        np.testing.assert_array_equal(updated.negative_map, pair.negative_map)


def test_permutation_invariance():
    rng = np.random.default_rng(11)
    clicks = list(random_click_set(rng, 24, 24, max_clicks=8))
    if len(clicks) < 2:
        clicks = [Click(0, 0, POSITIVE), Click(5, 7, NEGATIVE), Click(3, 3, POSITIVE)]
    a = encode_clicks(24, 24, ClickSet(tuple(clicks)))
    perm = [clicks[i] for i in rng.permutation(len(clicks))]
    b = encode_clicks(24, 24, ClickSet(tuple(perm)))
    np.testing.assert_array_equal(a.positive_map, b.positive_map)
    np.testing.assert_array_equal(a.negative_map, b.negative_map)


def test_lipschitz_along_rows():
    rng = np.random.default_rng(19)
    for _ in range(20):
        clicks = random_click_set(rng, 30, 30, max_clicks=8)
        if not len(clicks):
            continue
        pair = encode_clicks(30, 30, clicks)
        for m in (pair.positive_map, pair.negative_map):
            diff = np.abs(np.diff(m, axis=1))
            interior = (m[:, :-1] < 255.0) & (m[:, 1:] < 255.0)
            assert np.all(diff[interior] <= 1.0 + 1e-12)


def test_png_export_roundtrip(tmp_path):
    from PIL import Image

    pair = encode_clicks(16, 16, ClickSet.of(Click(4, 4, POSITIVE), Click(10, 2, NEGATIVE)))
    p, n = tmp_path / "pos.png", tmp_path / "neg.png"
    from clickseg.interactions import save_map_pngs

    save_map_pngs(pair, p, n)
    pos = np.asarray(Image.open(p))
    assert pos.dtype == np.uint8
    np.testing.assert_array_equal(pos, np.rint(pair.positive_map).astype(np.uint8))
