"""Sigmoid-power model of accuracy growth across introspection iterations.

The curve is f(t) = a / (1 + e^-(b*t + c))^3. The amplitude a has a closed
form under least squares for fixed (b, c); the full fit grid-searches
(b, c) and refines the best cell by coordinate descent.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .model import MedevalError

B_DEFAULT = 0.453
C_DEFAULT = 2.83
PUBLISHED_AMPLITUDE = 0.5274  # 1.0 * 0.9 * 0.586, the three-factor product

Point = tuple[float, float]


class EmptyData(MedevalError):
    pass


class TooFewPoints(MedevalError):
    pass


class DecreasingFit(Warning):
    """Fitted slope is negative: the curve decreases with iterations."""


def sigmoid_power(a: float, b: float, c: float, t: float) -> float:
    return a * _g(b, c, t)


def _g(b: float, c: float, t: float) -> float:
    """Unit-amplitude curve value; f(t) = a * g(t)."""
    z = -(b * t + c)
    if z > 700.0:  # exp would overflow; the curve is effectively 0 here
        return 0.0
    return (1.0 + math.exp(z)) ** -3


@dataclass(frozen=True)
class SigmoidFit:
    a: float
    b: float
    c: float
    rss: float
    points: tuple[Point, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.a <= 1.0:
            raise MedevalError(f"amplitude {self.a} outside [0, 1]")
        if self.rss < 0.0:
            raise MedevalError("negative residual sum of squares")

    def to_dict(self) -> dict[str, Any]:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "rss": self.rss,
            "points": [list(p) for p in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SigmoidFit":
        return cls(
            a=float(d["a"]),
            b=float(d["b"]),
            c=float(d["c"]),
            rss=float(d["rss"]),
            points=tuple((float(t), float(y)) for t, y in d["points"]),
        )


def published_fit(points: Sequence[Point] = ()) -> SigmoidFit:
    """The published parameter triple wrapped as a fit."""
    pts = normalize_points(points) if points else ()
    return SigmoidFit(
        a=PUBLISHED_AMPLITUDE,
        b=B_DEFAULT,
        c=C_DEFAULT,
        rss=rss(PUBLISHED_AMPLITUDE, B_DEFAULT, C_DEFAULT, pts) if pts else 0.0,
        points=tuple(pts),
    )


def eval_f(fit: SigmoidFit, t: float) -> float:
    return sigmoid_power(fit.a, fit.b, fit.c, t)


def normalize_points(points: Sequence[Point]) -> list[Point]:
    """Accept accuracies as percentages or fractions; any y above 1 means
    the whole series is percentages and gets divided by 100."""
    pts = [(float(t), float(y)) for t, y in points]
    if any(y < 0 for _t, y in pts):
        raise MedevalError("negative accuracy value")
    if any(y > 1.0 for _t, y in pts):
        pts = [(t, y / 100.0) for t, y in pts]
    return pts


def rss(a: float, b: float, c: float, points: Sequence[Point]) -> float:
    return sum((y - sigmoid_power(a, b, c, t)) ** 2 for t, y in points)


def fit_amplitude(points: Sequence[Point], b: float = B_DEFAULT, c: float = C_DEFAULT) -> float:
    """Closed-form least-squares amplitude for fixed (b, c):
    a = sum(g(t) * y) / sum(g(t)^2)."""
    pts = normalize_points(points)
    if not pts:
        raise EmptyData("no data points")
    num = sum(_g(b, c, t) * y for t, y in pts)
    den = sum(_g(b, c, t) ** 2 for t, _y in pts)
    return num / den


def _golden_section(fn, lo: float, hi: float, iters: int = 40) -> float:
    """Minimize a unimodal-ish fn on [lo, hi]; returns the best point seen."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi * (hi - lo)
            f2 = fn(x2)
    return x1 if f1 <= f2 else x2


DEFAULT_B_GRID = tuple(round(0.05 * i, 2) for i in range(1, 41)) + (B_DEFAULT,)
DEFAULT_C_GRID = tuple(round(-1.0 + 0.25 * i, 2) for i in range(0, 33)) + (C_DEFAULT,)


def fit_full(
    points: Sequence[Point],
    b_grid: Sequence[float] = DEFAULT_B_GRID,
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    descent_iters: int = 20,
) -> SigmoidFit:
    """Grid search over (b, c) with the closed-form amplitude per cell,
    then 20 rounds of golden-section coordinate descent around the best
    cell. The result never has higher RSS than the best grid cell."""
    pts = normalize_points(points)
    if len(pts) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(pts)}")

    def cell_rss(b: float, c: float) -> tuple[float, float]:
        a = fit_amplitude(pts, b, c)
        return rss(a, b, c, pts), a

    best: tuple[float, float, float, float] | None = None  # (rss, a, b, c)
    for b in b_grid:
        for c in c_grid:
            r, a = cell_rss(b, c)
            if best is None or r < best[0]:
                best = (r, a, b, c)
    assert best is not None
    best_rss, best_a, best_b, best_c = best

    b_step = max((max(b_grid) - min(b_grid)) / max(len(b_grid) - 1, 1), 1e-3)
    c_step = max((max(c_grid) - min(c_grid)) / max(len(c_grid) - 1, 1), 1e-3)
    for _ in range(descent_iters):
        cand_b = _golden_section(lambda b: cell_rss(b, best_c)[0], best_b - b_step, best_b + b_step)
        r, a = cell_rss(cand_b, best_c)
        if r < best_rss:
            best_rss, best_a, best_b = r, a, cand_b
        cand_c = _golden_section(lambda c: cell_rss(best_b, c)[0], best_c - c_step, best_c + c_step)
        r, a = cell_rss(best_b, cand_c)
        if r < best_rss:
            best_rss, best_a, best_c = r, a, cand_c
        b_step *= 0.7
        c_step *= 0.7

    return SigmoidFit(
        a=min(max(best_a, 0.0), 1.0), b=best_b, c=best_c, rss=best_rss, points=tuple(pts)
    )


@dataclass(frozen=True)
class Forecast:
    values: tuple[Point, ...]
    asymptote: float
    decreasing: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": [list(p) for p in self.values],
            "asymptote": self.asymptote,
            "decreasing": self.decreasing,
        }


def forecast_plateau(fit: SigmoidFit, horizon: int) -> Forecast:
    """Evaluate the fitted curve at t = 1..horizon. The limit as t grows is
    the amplitude; a negative slope is flagged (and warned) as decreasing."""
    if horizon < 1:
        raise MedevalError("horizon must be >= 1")
    decreasing = fit.b < 0
    if decreasing:
        warnings.warn("fitted curve decreases with t", DecreasingFit, stacklevel=2)
    values = tuple((float(t), eval_f(fit, t)) for t in range(1, horizon + 1))
    return Forecast(values=values, asymptote=fit.a, decreasing=decreasing)


def load_points_csv(path: str | Path) -> list[Point]:
    """Read `t,accuracy` rows; a non-numeric first row is taken as a header."""
    points: list[Point] = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or not "".join(row).strip():
                continue
            try:
                t, y = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if points:
                    raise MedevalError(f"bad csv row: {row!r}")
                continue
            points.append((t, y))
    if not points:
        raise EmptyData(f"no data rows in {path}")
    return points
