"""Sigmoid growth-curve fitting and forecasting tests.

Expected values were computed with a standalone script from the closed
forms (f(t) = a / (1 + e^-(bt+c))^3, a_ls = sum(g*y) / sum(g^2)) before
this module was consulted.
"""

from __future__ import annotations

import math

import pytest

from medeval.growth import (
    B_DEFAULT,
    C_DEFAULT,
    PUBLISHED_AMPLITUDE,
    DecreasingFit,
    EmptyData,
    Forecast,
    SigmoidFit,
    TooFewPoints,
    eval_f,
    fit_amplitude,
    fit_full,
    forecast_plateau,
    load_points_csv,
    normalize_points,
    published_fit,
    rss,
    sigmoid_power,
)
from medeval.model import MedevalError

THREE_POINTS = [(0.0, 0.4461), (1.0, 0.4713), (2.0, 0.4865)]
A_LS_EXPECTED = 0.5258549100821597


def test_published_amplitude_is_three_factor_product() -> None:
    assert PUBLISHED_AMPLITUDE == pytest.approx(1.0 * 0.9 * 0.586, abs=1e-12)


@pytest.mark.parametrize(
    "t,expected",
    [(0, 0.444055), (1, 0.472233), (2, 0.491396), (3, 0.504121), (6, 0.521285), (10, 0.526395)],
)
def test_published_curve_values(t: int, expected: float) -> None:
    assert sigmoid_power(PUBLISHED_AMPLITUDE, B_DEFAULT, C_DEFAULT, t) == pytest.approx(
        expected, abs=1e-6
    )


def test_curve_approaches_amplitude() -> None:
    assert sigmoid_power(PUBLISHED_AMPLITUDE, B_DEFAULT, C_DEFAULT, 200) == pytest.approx(
        PUBLISHED_AMPLITUDE, abs=1e-12
    )


def test_curve_is_increasing_for_positive_slope() -> None:
    values = [sigmoid_power(0.6, 0.5, 1.0, t) for t in range(12)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_extreme_negative_exponent_is_zero_not_overflow() -> None:
    assert sigmoid_power(0.5, -100.0, 0.0, 10.0) == 0.0


# --- fit_amplitude ---


def test_amplitude_matches_closed_form() -> None:
    assert fit_amplitude(THREE_POINTS) == pytest.approx(A_LS_EXPECTED, abs=1e-12)


def test_amplitude_beats_dense_scan() -> None:
    a_fit = fit_amplitude(THREE_POINTS)
    r_fit = rss(a_fit, B_DEFAULT, C_DEFAULT, THREE_POINTS)
    for i in range(1, 10001):
        a = 0.0001 * i
        assert r_fit <= rss(a, B_DEFAULT, C_DEFAULT, THREE_POINTS) + 1e-15


def test_amplitude_accepts_percent_series() -> None:
    percents = [(t, y * 100.0) for t, y in THREE_POINTS]
    assert fit_amplitude(percents) == pytest.approx(fit_amplitude(THREE_POINTS), abs=1e-12)


def test_amplitude_exact_on_noiseless_curve() -> None:
    pts = [(float(t), sigmoid_power(0.52, B_DEFAULT, C_DEFAULT, t)) for t in range(5)]
    assert fit_amplitude(pts) == pytest.approx(0.52, abs=1e-12)


def test_amplitude_rejects_empty_and_negative() -> None:
    with pytest.raises(EmptyData):
        fit_amplitude([])
    with pytest.raises(MedevalError):
        fit_amplitude([(0.0, -0.1)])


# --- normalize_points ---


def test_normalize_keeps_fractions() -> None:
    assert normalize_points([(0, 0.5), (1, 1.0)]) == [(0.0, 0.5), (1.0, 1.0)]


def test_normalize_divides_percent_series() -> None:
    pts = normalize_points([(0, 44.6), (1, 47.1)])
    assert [t for t, _ in pts] == [0.0, 1.0]
    assert [y for _, y in pts] == pytest.approx([0.446, 0.471])


# --- SigmoidFit ---


def test_fit_round_trip() -> None:
    fit = SigmoidFit(a=0.5, b=0.4, c=2.0, rss=0.001, points=((0.0, 0.4), (1.0, 0.45)))
    assert SigmoidFit.from_dict(fit.to_dict()) == fit


def test_fit_validates_amplitude_range() -> None:
    with pytest.raises(MedevalError):
        SigmoidFit(a=1.2, b=0.4, c=2.0, rss=0.0, points=())
    with pytest.raises(MedevalError):
        SigmoidFit(a=0.5, b=0.4, c=2.0, rss=-1.0, points=())


def test_published_fit_wraps_published_parameters() -> None:
    fit = published_fit(THREE_POINTS)
    assert (fit.a, fit.b, fit.c) == (PUBLISHED_AMPLITUDE, B_DEFAULT, C_DEFAULT)
    assert fit.rss == pytest.approx(rss(PUBLISHED_AMPLITUDE, B_DEFAULT, C_DEFAULT, THREE_POINTS))


# --- fit_full ---


def test_full_fit_recovers_noiseless_parameters() -> None:
    pts = [(float(t), sigmoid_power(0.6, 0.5, 1.2, t)) for t in range(9)]
    fit = fit_full(pts)
    assert fit.rss < 1e-10
    assert eval_f(fit, 4.0) == pytest.approx(sigmoid_power(0.6, 0.5, 1.2, 4.0), abs=1e-4)


def test_full_fit_never_worse_than_published_parameters() -> None:
    fit = fit_full(THREE_POINTS)
    assert fit.rss <= rss(A_LS_EXPECTED, B_DEFAULT, C_DEFAULT, THREE_POINTS) + 1e-15


def test_full_fit_never_worse_than_sampled_grid_cells() -> None:
    pts = [(float(t), sigmoid_power(0.55, 0.4, 1.5, t) + 0.002 * (-1) ** t) for t in range(7)]
    fit = fit_full(pts)
    for b in (0.1, 0.45, 1.0, 2.0):
        for c in (-0.5, 0.0, 1.5, 2.83):
            a = fit_amplitude(pts, b, c)
            assert fit.rss <= rss(a, b, c, pts) + 1e-15


def test_full_fit_requires_three_points() -> None:
    with pytest.raises(TooFewPoints):
        fit_full([(0.0, 0.4), (1.0, 0.45)])


# --- forecast ---


def test_forecast_values_follow_curve() -> None:
    fit = published_fit()
    forecast = forecast_plateau(fit, horizon=4)
    assert [t for t, _ in forecast.values] == [1.0, 2.0, 3.0, 4.0]
    for t, y in forecast.values:
        assert y == pytest.approx(eval_f(fit, t), abs=1e-15)
    assert forecast.asymptote == fit.a
    assert forecast.decreasing is False


def test_forecast_warns_on_decreasing_curve() -> None:
    fit = SigmoidFit(a=0.5, b=-0.2, c=3.0, rss=0.0, points=())
    with pytest.warns(DecreasingFit):
        forecast = forecast_plateau(fit, horizon=3)
    assert forecast.decreasing is True


def test_forecast_requires_positive_horizon() -> None:
    with pytest.raises(MedevalError):
        forecast_plateau(published_fit(), horizon=0)


def test_forecast_round_trip_dict() -> None:
    forecast = forecast_plateau(published_fit(), horizon=2)
    data = forecast.to_dict()
    assert data["asymptote"] == PUBLISHED_AMPLITUDE
    assert len(data["values"]) == 2


# --- csv loading ---


def test_csv_with_header(tmp_path) -> None:
    path = tmp_path / "pts.csv"
    path.write_text("iteration,accuracy\n0,44.61\n1,47.13\n", encoding="utf-8")
    assert load_points_csv(path) == [(0.0, 44.61), (1.0, 47.13)]


def test_csv_without_header(tmp_path) -> None:
    path = tmp_path / "pts.csv"
    path.write_text("0,0.4461\n1,0.4713\n", encoding="utf-8")
    assert load_points_csv(path) == [(0.0, 0.4461), (1.0, 0.4713)]


def test_csv_bad_row_after_data(tmp_path) -> None:
    path = tmp_path / "pts.csv"
    path.write_text("0,0.44\noops,not-a-number\n", encoding="utf-8")
    with pytest.raises(MedevalError):
        load_points_csv(path)


def test_csv_empty_file(tmp_path) -> None:
    path = tmp_path / "pts.csv"
    path.write_text("iteration,accuracy\n", encoding="utf-8")
    with pytest.raises(EmptyData):
        load_points_csv(path)
