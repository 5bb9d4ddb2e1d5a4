import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.signal import find_peaks, peak_prominences

from ddlab import analysis
from ddlab.analysis import LossCurve, detect_interpolation_peak, peak_loci
from ddlab.sweep import ResultRow, ResultsTable

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def curve(losses, caps=None):
    caps = caps if caps is not None else range(1, len(losses) + 1)
    return LossCurve(list(caps), list(losses))


# -- detector worked examples -------------------------------------------------------


def test_bump_fires():
    rep = detect_interpolation_peak(curve([1.0, 0.5, 0.8, 0.4, 0.3]))
    assert rep.has_peak and rep.peak_index == 2
    assert rep.prominence_fraction == pytest.approx(0.3 / 0.7)
    assert rep.classification == "double_descent"
    assert rep.peak_capacity == 3


def test_monotone_decreasing():
    rep = detect_interpolation_peak(curve([5, 4, 3, 2, 1]))
    assert not rep.has_peak and rep.classification == "monotone_decreasing"
    assert rep.argmin_capacity == 5


def test_u_shape_is_not_a_peak():
    rep = detect_interpolation_peak(curve([3, 1, 2, 4, 6]))
    assert not rep.has_peak and rep.classification == "u_shape"
    assert rep.argmin_index == 1


def test_right_arm_wiggle_of_u_does_not_fire():
    # a bump on the rising arm never drops below its left base
    rep = detect_interpolation_peak(curve([6, 1, 3, 2.5, 5, 7]))
    assert not rep.has_peak


def test_small_bump_below_threshold():
    rep = detect_interpolation_peak(curve([10, 8, 6, 6.3, 4, 2, 1]))
    assert not rep.has_peak
    assert rep.prominence_fraction == pytest.approx(0.3 / 9)
    assert rep.classification == "monotone_decreasing"  # 0.3 <= 5% of 9


def test_strongest_firing_peak_is_reported():
    rep = detect_interpolation_peak(curve([10, 5, 6, 3, 9, 1, 0.5]))
    assert rep.has_peak and rep.peak_index == 4


def test_flat_and_validation():
    assert detect_interpolation_peak(curve([2, 2, 2, 2])).classification == "monotone_decreasing"
    with pytest.raises(ValueError):
        detect_interpolation_peak(curve([1, 2, 3]))
    with pytest.raises(ValueError):
        detect_interpolation_peak(curve([1, 2, 3, 4]), prominence_threshold=1.5)
    with pytest.raises(ValueError):
        LossCurve([1, 1, 2, 3], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        LossCurve([1, 2, 3, 4], [1, math.nan, 3, 4])


def test_smoothing_option():
    y = [1.0, 0.5, 0.8, 0.4, 0.3]
    assert detect_interpolation_peak(curve(y), smooth_window=1).has_peak
    assert not detect_interpolation_peak(curve(y), smooth_window=3).has_peak
    assert np.allclose(analysis.moving_average(np.array(y), 3)[1:4], [2.3 / 3, 1.7 / 3, 1.5 / 3])


def test_classify_shape_examples():
    assert analysis.classify_shape(np.array([1.0, 2, 3, 4])) == "monotone_increasing"
    assert analysis.classify_shape(np.array([1.0, 5, 0, 5, 1])) == "irregular"


# -- detector against an independent implementation ---------------------------------


@settings(max_examples=200)
@given(st.lists(finite, min_size=4, max_size=25, unique=True))
def test_prominence_matches_scipy(ys):
    y = np.array(ys)
    peaks, _ = find_peaks(y)
    assert analysis.local_maxima(y) == list(peaks)
    assume(len(peaks))
    prom = peak_prominences(y, peaks)[0]
    span = y.max() - y.min()
    for p, ref in zip(peaks, prom):
        left, right = analysis.flanking_minima(y, p)
        assert y[p] - max(left, right) == pytest.approx(ref)
    rep = detect_interpolation_peak(curve(y))
    assert rep.prominence_fraction == pytest.approx(prom.max() / span) or rep.has_peak


@given(st.lists(st.integers(-1000, 1000), min_size=4, max_size=20), st.floats(0.1, 100),
       st.floats(-1e3, 1e3))
def test_detector_invariant_to_affine_rescaling(ys, scale, shift):
    y = np.array(ys, dtype=float)
    a = detect_interpolation_peak(curve(y))
    b = detect_interpolation_peak(curve(scale * y + shift))
    assert a.has_peak == b.has_peak and a.peak_index == b.peak_index
    assert a.prominence_fraction == pytest.approx(b.prominence_fraction, abs=1e-9)


@given(st.lists(st.floats(0, 100), min_size=4, max_size=20))
def test_sorted_curves_never_fire(ys):
    assert not detect_interpolation_peak(curve(sorted(ys, reverse=True))).has_peak
    assert not detect_interpolation_peak(curve(sorted(ys))).has_peak


@given(st.lists(finite, min_size=4, max_size=20))
def test_firing_peak_redescends(ys):
    y = np.array(ys)
    rep = detect_interpolation_peak(curve(y))
    if rep.has_peak:
        left, _ = analysis.flanking_minima(y, rep.peak_index)
        assert rep.prominence_fraction >= 0.1
        assert y[rep.peak_index + 1 :].min() < left


# -- peak loci ----------------------------------------------------------------------------


def test_peak_loci_values():
    (lat, h), = peak_loci(50, 5000, "features", [20])
    assert lat == 20 and h == pytest.approx((250000 - 70) / 142)
    assert analysis.ae_param_count(50, h, 20) == pytest.approx(250000)
    (_, h), = peak_loci(50, 5000, "latent", [20])
    assert h == pytest.approx((100000 - 70) / 142)
    assert peak_loci(50, 1, "latent", [2]) == []
    with pytest.raises(ValueError):
        peak_loci(50, 10, "outputs", [2])


@given(st.integers(1, 100), st.integers(1, 10**5), st.integers(1, 200))
def test_peak_loci_balance_parameters_and_constraints(n, big_n, lat):
    for a in ("features", "latent"):
        for latent, h in peak_loci(n, big_n, a, [lat]):
            out_dim = n if a == "features" else latent
            assert analysis.ae_param_count(n, h, latent) == pytest.approx(big_n * out_dim)


# -- tables ------------------------------------------------------------------------------


def make_table(cells):
    rows = []
    for (lat, hid), (tr, te) in cells.items():
        for seed in (0, 1):
            rows.append(ResultRow("ae", lat, hid, 5000, 50, 20, 10.0, 1000, seed, 200, 0.001, 10,
                                  tr * (1 + 0.1 * seed), te * (1 + 0.1 * seed), False))
    return ResultsTable(rows)


GRID = {
    (2, 200): (60, 70), (5, 200): (40, 45), (10, 200): (20, 25), (20, 200): (0.005, 0.6),
    (30, 200): (0.004, 15), (50, 200): (0.003, 30),
    (20, 4): (50, 55), (20, 16): (10, 12), (20, 64): (0.006, 0.7), (20, 512): (0.002, 0.5),
}


def test_slices_and_interpolation_sets():
    table = make_table(GRID)
    slices = analysis.classify_ae_slices(table)
    assert slices["latent_slice"].capacities == [2, 5, 10, 20, 30, 50]
    assert slices["latent_slice"].classification == "u_shape"
    assert slices["hidden_slice"].capacities == [4, 16, 64, 200, 512]
    assert slices["hidden_slice"].classification == "monotone_decreasing"
    inside = analysis.interpolating_cells(table)
    assert inside == {(20, 200), (30, 200), (50, 200), (20, 64), (20, 512)}
    # (20, 200) touches (10, 200); (20, 64) touches (20, 16)
    assert analysis.interpolation_boundary(table) == {(20, 200), (20, 64)}


def test_curve_from_table_takes_seed_means():
    c = analysis.curve_from_table(make_table(GRID), "latent", {"hidden": 200})
    assert c.losses[0] == pytest.approx(70 * 1.05)
    with pytest.raises(ValueError):
        analysis.curve_from_table(make_table(GRID), "latent", {"hidden": 3})


def test_report_structure():
    rep = analysis.build_report(make_table(GRID), analysis.minnorm_regression_control(trials=20))
    assert rep["verdicts"]["latent_slice"] == "u_shape"
    assert rep["verdicts"]["control_has_peak"] is True
    pred = rep["ae"]["predicted_peak_hidden"]
    assert pred["features"]["hidden"] == [pytest.approx((250000 - 70) / 142)]
    assert pred["features"]["bracketed"] is False
    assert rep["ae"]["boundary_cells"] == [[20, 64], [20, 200]]


# -- regression control ---------------------------------------------------------------


def test_control_matches_closed_form_away_from_interpolation():
    p, s2 = 25, 0.25
    c = analysis.minnorm_regression_control(p, (5, 10, 80, 200), 0.5, 400, seed=3)
    under = lambda n: (1 - n / p) + s2 * n / (p - n - 1) + s2  # noqa: E731
    over = lambda n: s2 * p / (n - p - 1) + s2  # noqa: E731
    expected = [under(5), under(10), over(80), over(200)]
    assert np.allclose(c.losses, expected, rtol=0.08)


def test_control_large_n_approaches_noise_floor():
    c = analysis.minnorm_regression_control(25, (2000,), 0.5, 200)
    assert c.losses[0] == pytest.approx(0.25, rel=0.1)


def test_control_fires_at_interpolation_threshold():
    c = analysis.minnorm_regression_control()
    rep = detect_interpolation_peak(c)
    assert rep.has_peak and rep.peak_capacity in (24, 25, 26)
    assert rep.prominence_fraction > 0.5


def test_control_is_order_independent():
    a = analysis.minnorm_regression_control(10, (5, 20), 0.5, 5, seed=1)
    b = analysis.minnorm_regression_control(10, (20, 5), 0.5, 5, seed=1)
    assert a.losses.tolist() == b.losses.tolist()
    with pytest.raises(ValueError):
        analysis.minnorm_regression_control(trials=0)
