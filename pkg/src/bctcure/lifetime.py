"""Two-parameter Weibull lifetime distribution.

Parameterized as ``F(y) = 1 - exp{-(gamma2 * y) ** (1 / gamma1)}`` so that
``gamma1`` is the reciprocal of the usual shape and ``gamma2`` is an inverse
scale (units of 1/time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "WeibullParams",
    "weibull_cdf",
    "weibull_logsf",
    "weibull_logpdf",
    "weibull_pdf",
    "weibull_quantile",
    "weibull_mean_var",
    "weibull_moment_match",
    "MomentMatchError",
]


class MomentMatchError(RuntimeError):
    """Raised when the coefficient-of-variation equation has no root."""


@dataclass(frozen=True)
class WeibullParams:
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ValueError(
                f"Weibull parameters must be positive, got "
                f"gamma1={self.gamma1}, gamma2={self.gamma2}"
            )
        if not (math.isfinite(self.gamma1) and math.isfinite(self.gamma2)):
            raise ValueError("Weibull parameters must be finite")
        object.__setattr__(self, "gamma1", float(self.gamma1))
        object.__setattr__(self, "gamma2", float(self.gamma2))


def _check_times(y, strict=False):
    y = np.asarray(y, dtype=float)
    bad = (y <= 0) if strict else (y < 0)
    if np.any(bad) or np.any(np.isnan(y)):
        bound = "positive" if strict else "nonnegative"
        raise ValueError(f"times must be {bound}")
    return y


def _cumhaz(y, params):
    # (gamma2 * y) ** (1 / gamma1), the cumulative hazard
    return np.power(params.gamma2 * y, 1.0 / params.gamma1)


def weibull_cdf(y, params: WeibullParams):
    """Distribution function ``F(y)``; accepts scalars or arrays."""
    y = _check_times(y)
    out = -np.expm1(-_cumhaz(y, params))
    return out if out.ndim else float(out)


def weibull_logsf(y, params: WeibullParams):
    """``log(1 - F(y))``, exact for arbitrarily large ``y``."""
    y = _check_times(y)
    out = -_cumhaz(y, params)
    return out if out.ndim else float(out)


def weibull_logpdf(y, params: WeibullParams):
    y = _check_times(y, strict=True)
    g1 = params.gamma1
    logz = np.log(params.gamma2 * y)
    out = -math.log(g1) - np.log(y) + logz / g1 - np.exp(logz / g1)
    return out if out.ndim else float(out)


def weibull_pdf(y, params: WeibullParams):
    """Density ``f(y) = (gamma2 y)^(1/gamma1) {1 - F(y)} / (gamma1 y)``."""
    out = np.exp(weibull_logpdf(y, params))
    return out if np.ndim(out) else float(out)


def weibull_quantile(u, params: WeibullParams):
    """Inverse of :func:`weibull_cdf` on ``[0, 1)``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u >= 1) or np.any(np.isnan(u)):
        raise ValueError("quantile level must lie in [0, 1)")
    out = np.power(-np.log1p(-u), params.gamma1) / params.gamma2
    return out if out.ndim else float(out)


def weibull_mean_var(params: WeibullParams) -> tuple[float, float]:
    """Mean ``G(1+g1)/g2`` and variance ``[G(1+2 g1) - G(1+g1)^2]/g2^2``."""
    g1, g2 = params.gamma1, params.gamma2
    mean = math.exp(gammaln(1 + g1)) / g2
    var = mean**2 * _cv2(g1)
    return mean, var


def _cv2(g1):
    # squared coefficient of variation, a function of gamma1 alone
    return math.expm1(gammaln(1 + 2 * g1) - 2 * gammaln(1 + g1))


def weibull_moment_match(
    sample_mean: float,
    sample_var: float,
    bracket: tuple[float, float] = (1e-6, 50.0),
    tol: float = 1e-10,
) -> WeibullParams:
    """Weibull parameters whose mean and variance equal the given moments.

    The squared coefficient of variation depends on ``gamma1`` only and is
    increasing in it, so ``gamma1`` is found by bisection and ``gamma2``
    follows from the mean.
    """
    if not (sample_mean > 0 and sample_var > 0):
        raise ValueError("sample mean and variance must be positive")
    target = sample_var / sample_mean**2
    lo, hi = bracket
    f_lo, f_hi = _cv2(lo) - target, _cv2(hi) - target
    if f_lo > 0 or f_hi < 0:
        raise MomentMatchError(
            f"coefficient of variation {math.sqrt(target):.6g} is outside "
            f"the range reachable for gamma1 in [{lo}, {hi}]"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _cv2(mid) < target:
            lo = mid
        else:
            hi = mid
    g1 = 0.5 * (lo + hi)
    g2 = math.exp(gammaln(1 + g1)) / sample_mean
    return WeibullParams(g1, g2)
