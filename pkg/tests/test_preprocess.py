import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rocr.preprocess import (NoReceiptError, PreprocessConfig, axis_profile, extract_receipt_region,
                             longest_run)
from rocr.raster import Raster, Rect, crop


def runs_by_enumeration(profile, frac):
    """Oracle: try every (start, end) span and keep the longest all-above one."""
    t = frac * max(profile)
    best = None
    n = len(profile)
    for s in range(n):
        for e in range(s + 1, n + 1):
            if all(v > t for v in profile[s:e]):
                if best is None or (e - s) > (best[1] - best[0]):
                    best = (s, e)
    return best


def test_profile_examples():
    cfg = PreprocessConfig()
    assert axis_profile(Raster.filled(4, 3, 0.0), "x", cfg).tolist() == [0, 0, 0, 0]
    img = Raster([[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]])
    assert axis_profile(img, "x", cfg).tolist() == [2, 0, 2]
    checker = Raster([[1.0, 0.0], [0.0, 1.0]])
    assert axis_profile(checker, "x", cfg).tolist() == [1, 1]
    assert axis_profile(checker, "y", cfg).tolist() == [1, 1]


def test_profile_dark_paper_polarity():
    cfg = PreprocessConfig(paper_polarity="dark-paper")
    img = Raster([[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]])
    assert axis_profile(img, "x", cfg).tolist() == [0, 2, 0]


def test_longest_run_examples():
    assert longest_run([0, 5, 5, 5, 0]) == (1, 4)
    assert longest_run([5, 0, 5, 5]) == (2, 4)
    assert runs_by_enumeration([5, 0, 5, 5], 0.05) == (2, 4)
    with pytest.raises(NoReceiptError):
        longest_run([0, 0, 0])


@given(st.lists(st.integers(0, 20), min_size=1, max_size=15).filter(lambda p: max(p) > 0),
       st.sampled_from([0.05, 0.2, 0.5, 0.9]))
def test_longest_run_matches_enumeration(profile, frac):
    assert longest_run(profile, PreprocessConfig(run_threshold=frac)) == runs_by_enumeration(profile, frac)


@given(st.lists(st.integers(0, 20), min_size=1, max_size=15).filter(lambda p: max(p) > 0))
def test_longer_threshold_never_wider(profile):
    widths = []
    for frac in (0.05, 0.2, 0.5, 0.9):
        s, e = longest_run(profile, PreprocessConfig(run_threshold=frac))
        widths.append(e - s)
    assert widths == sorted(widths, reverse=True)


def block_image():
    px = np.zeros((100, 100))
    px[10:80, 20:60] = 1.0
    return Raster(px)


def test_extract_block():
    assert extract_receipt_region(block_image(), PreprocessConfig(margin=0)) == Rect(20, 10, 60, 80)
    assert extract_receipt_region(block_image(), PreprocessConfig(margin=8)) == Rect(12, 2, 68, 88)


def test_extract_full_bright():
    img = Raster.filled(30, 20, 1.0)
    assert extract_receipt_region(img) == img.frame


def test_extract_picks_wider_band():
    px = np.zeros((40, 100))
    px[:, 5:15] = 1.0
    px[:, 50:80] = 1.0
    r = extract_receipt_region(Raster(px), PreprocessConfig(margin=0))
    assert (r.x0, r.x1) == (50, 80)


def test_extract_no_receipt():
    with pytest.raises(NoReceiptError):
        extract_receipt_region(Raster.filled(5, 5, 0.0))


@given(st.integers(0, 40), st.integers(0, 40), st.integers(5, 40), st.integers(5, 40), st.integers(0, 12))
def test_extract_idempotent_and_in_bounds(x0, y0, w, h, margin):
    px = np.full((90, 90), 0.1)
    px[y0:y0 + h, x0:x0 + w] = 0.95
    img = Raster(px)
    cfg = PreprocessConfig(margin=margin)
    r = extract_receipt_region(img, cfg)
    assert 0 <= r.x0 < r.x1 <= img.width and 0 <= r.y0 < r.y1 <= img.height
    sub = crop(img, extract_receipt_region(img, PreprocessConfig(margin=0)))
    assert extract_receipt_region(sub, PreprocessConfig(margin=0)) == sub.frame
