"""
Fitting the accuracy growth curve and forecasting its plateau
=============================================================
"""

from medeval.growth import (
    B_DEFAULT,
    C_DEFAULT,
    PUBLISHED_AMPLITUDE,
    eval_f,
    fit_amplitude,
    fit_full,
    forecast_plateau,
    published_fit,
    sigmoid_power,
)

# Accuracy over introspection iterations follows f(t) = a * sigmoid(b*t + c):
# the amplitude a is the ceiling the loop approaches.
for t in (0, 1, 2, 6):
    value = sigmoid_power(PUBLISHED_AMPLITUDE, B_DEFAULT, C_DEFAULT, t)
    print(f"f({t}) = {value:.4f}")

# With only a few observed iterations, hold (b, c) at their defaults and
# solve the amplitude in closed form.
observed = [(0.0, 0.4461), (1.0, 0.4713), (2.0, 0.4865)]
a = fit_amplitude(observed)
print(f"closed-form amplitude from 3 points: {a:.4f}")

# With more data, grid-search (b, c) and polish with coordinate descent.
truth = [(float(t), sigmoid_power(0.58, 0.5, 1.4, t)) for t in range(9)]
fit = fit_full(truth)
print(f"full fit: a={fit.a:.4f} b={fit.b:.4f} c={fit.c:.4f} rss={fit.rss:.2e}")

# Forecasts extrapolate the fitted curve and report the asymptote.
forecast = forecast_plateau(fit, horizon=12)
print(f"asymptote {forecast.asymptote:.4f}; f(12) = {eval_f(fit, 12.0):.4f}")

# published_fit is the reference parameterization for comparison runs.
print(f"reference ceiling: {published_fit().a:.4f}")
