import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcisim.errors import DegenerateInputError
from bcisim.similarity import UNBOUNDED, BandParam, dtw_banded, emd_1d, euclidean, to_mass, xcorr
from oracles.warp import dtw_all_paths, transport_lp

small = st.lists(st.integers(-50, 50), min_size=1, max_size=7)


def test_identity_zero():
    for r in (1, 2, 5, None):
        assert dtw_banded([1, 2, 3], [1, 2, 3], BandParam(r)).value == 0


def test_unbounded_example():
    assert dtw_banded([0, 1, 2], [0, 2, 2], UNBOUNDED).value == 1


@given(a=small, b=small)
def test_unbounded_matches_path_enumeration(a, b):
    assert dtw_banded(a, b, UNBOUNDED).value == pytest.approx(dtw_all_paths(a, b))


@given(a=small, b=small, r=st.integers(1, 6))
def test_banded_matches_path_enumeration(a, b, r):
    if abs(len(a) - len(b)) >= r:
        with pytest.raises(ValueError):
            dtw_banded(a, b, BandParam(r))
        return
    assert dtw_banded(a, b, BandParam(r)).value == pytest.approx(dtw_all_paths(a, b, radius=r))


@given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(-1000, 1000)), min_size=1, max_size=40))
def test_radius_one_is_elementwise_sum(pairs):
    a, b = map(list, zip(*pairs))
    d = np.subtract(a, b)
    assert dtw_banded(a, b, BandParam(1), "squared").value == float((d * d).sum())
    assert dtw_banded(a, b, BandParam(1), "abs").value == float(np.abs(d).sum())


def test_radius_one_needs_equal_lengths():
    with pytest.raises(ValueError):
        dtw_banded([1, 2], [1, 2, 3], BandParam(1))


def test_band_rejects_zero():
    with pytest.raises(ValueError):
        BandParam(0)


@given(a=st.lists(st.integers(-30, 30), min_size=6, max_size=6), b=st.lists(st.integers(-30, 30), min_size=6, max_size=6))
def test_dtw_symmetric_and_monotone_in_band(a, b):
    vals = [dtw_banded(a, b, BandParam(r)).value for r in (1, 2, 3, 6)]
    assert all(x >= y - 1e-9 for x, y in zip(vals, vals[1:]))
    assert dtw_banded(a, b).value == pytest.approx(dtw_banded(b, a).value)
    assert dtw_banded(a, b, UNBOUNDED).value <= vals[0]


def test_euclidean_examples():
    assert euclidean([0, 0], [3, 4]).value == 5
    assert euclidean([7, -2], [7, -2]).value == 0
    with pytest.raises(ValueError):
        euclidean([1], [1, 2])


@given(st.lists(st.tuples(st.integers(-99, 99), st.integers(-99, 99)), min_size=1, max_size=30))
def test_euclidean_squared_is_radius_one_dtw(pairs):
    a, b = map(list, zip(*pairs))
    assert euclidean(a, b).value ** 2 == pytest.approx(dtw_banded(a, b, BandParam(1), "squared").value)


def test_xcorr_examples():
    x = np.sin(np.arange(64) * 0.3) + 0.1 * np.arange(64) % 3
    r = xcorr(x, x)
    assert r.value == pytest.approx(1.0) and r.lag == 0
    assert xcorr(x, -x).value == pytest.approx(-1.0)


def test_xcorr_quarter_period_shift():
    period = 40
    t = np.arange(400)
    a = np.sin(2 * np.pi * t / period)
    b = np.sin(2 * np.pi * t / period + np.pi / 2)
    # Pearson correlation of sin and cos over whole periods is 0 at lag 0
    assert np.corrcoef(a, b)[0, 1] == pytest.approx(0.0, abs=1e-9)
    r = xcorr(a, b)
    assert r.value == pytest.approx(1.0, abs=1e-9)
    assert r.lag % period in (period // 4, 3 * period // 4) or abs(r.lag) == period // 4


def test_xcorr_degenerate_flag():
    r = xcorr([3, 3, 3], [1, 2, 3])
    assert r.value == 0 and r.degenerate


@given(a=st.lists(st.floats(-100, 100), min_size=3, max_size=20),
       b=st.lists(st.floats(-100, 100), min_size=3, max_size=20))
def test_xcorr_bounded_and_symmetric_in_value(a, b):
    r = xcorr(a, b).value
    assert -1.0 <= r <= 1.0


def test_emd_examples():
    assert emd_1d([1, 0], [0, 1]).value == 1
    assert emd_1d([2, 5, 1], [2, 5, 1]).value == 0
    with pytest.raises(DegenerateInputError):
        emd_1d([0, 0], [0, 0])


@given(a=st.lists(st.integers(0, 20), min_size=1, max_size=6), data=st.data())
def test_emd_equals_transport_lp(a, data):
    b = data.draw(st.lists(st.integers(0, 20), min_size=len(a), max_size=len(a)))
    if sum(a) == 0 or sum(b) == 0:
        return
    p, q = to_mass(a, b)
    assert emd_1d(a, b).value == pytest.approx(transport_lp(p, q), abs=1e-9)
    assert emd_1d(a, b).value == pytest.approx(emd_1d(b, a).value)
