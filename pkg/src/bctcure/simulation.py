"""True-parameter construction and censored data generation.

Random streams: every dataset draws from its own ``numpy`` PCG64 generator
seeded by ``SeedSequence(seed, spawn_key=index)``; ``index`` is the
replication (or resample) number, so results do not depend on execution
order or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .lifetime import WeibullParams, weibull_quantile
from .model import ALPHA_ZERO, Dataset, ParameterVector, covariate_link, cure_rate

__all__ = [
    "BinaryScenario",
    "ContinuousScenario",
    "rng_stream",
    "bct_link_inverse",
    "true_params_binary",
    "true_params_continuous",
    "susceptible_time",
    "generate_binary",
    "generate_continuous",
    "generate",
    "expected_censoring",
    "calibrate_censoring_rate",
]

DEFAULT_GAMMA = WeibullParams(0.316, 0.179)


def rng_stream(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, index...)``."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index)))
    )


def _check_prop(name, p):
    if not 0.0 < p < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {p}")


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def bct_link_inverse(p0: float, alpha: float) -> float:
    """Linear predictor ``eta`` giving cure rate ``p0`` under index ``alpha``.

    ``log{(p0^-alpha - 1) / alpha}``, or ``log(-log p0)`` at alpha = 0.
    """
    _check_prop("cure proportion", p0)
    _check_alpha(alpha)
    if alpha < ALPHA_ZERO:
        return math.log(-math.log(p0))
    return math.log(math.expm1(-alpha * math.log(p0)) / alpha)


def true_params_binary(p01: float, p00: float, alpha: float) -> tuple[float, float]:
    """``(beta0, beta1)`` with cure rate ``p00`` at x = 0 and ``p01`` at x = 1."""
    _check_prop("p01", p01)
    _check_prop("p00", p00)
    beta0 = bct_link_inverse(p00, alpha)
    return beta0, bct_link_inverse(p01, alpha) - beta0


def true_params_continuous(
    p_high: float, p_low: float, x_min: float, x_max: float, alpha: float
) -> tuple[float, float]:
    """``(beta0, beta1)`` with cure rate ``p_high`` at ``x_min``, ``p_low`` at ``x_max``."""
    if not x_min < x_max:
        raise ValueError("x_min must be below x_max")
    _check_prop("p_high", p_high)
    _check_prop("p_low", p_low)
    g_low = bct_link_inverse(p_low, alpha)
    beta1 = (g_low - bct_link_inverse(p_high, alpha)) / (x_max - x_min)
    return g_low - beta1 * x_max, beta1


def susceptible_time(u_star, p0, phi, alpha: float, gamma: WeibullParams):
    """Event time of a non-cured subject by inverting the susceptible survival.

    Solves ``{S_p(t) - p0} / (1 - p0) = u_star`` for ``t``.
    """
    u_star = np.asarray(u_star, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    phi = np.asarray(phi, dtype=float)
    level = np.log(p0 + (1.0 - p0) * u_star)
    if alpha < ALPHA_ZERO:
        arg = -level / phi
    else:
        arg = -np.expm1(alpha * level) / (alpha * phi)
    slack = 1e-12
    if np.any(arg < -slack) or np.any(arg > 1.0 + slack) or np.any(np.isnan(arg)):
        raise ValueError("inconsistent cure rate, link and alpha: F^-1 argument outside [0, 1)")
    arg = np.clip(arg, 0.0, 1.0)
    top = arg >= 1.0
    t = np.empty_like(arg)
    t[top] = np.inf
    t[~top] = weibull_quantile(arg[~top], gamma)
    return t if t.ndim else float(t)


@dataclass(frozen=True)
class BinaryScenario:
    """Two groups: group 1 has x = 1, group 2 has x = 0.

    ``c1`` and ``c2`` are exponential censoring rates unless
    ``censoring="proportion"``, in which case they are target censoring
    proportions and the rates are solved for.
    """

    n1: int = 120
    n2: int = 80
    p01: float = 0.40
    p00: float = 0.20
    alpha: float = 0.5
    gamma: WeibullParams = field(default=DEFAULT_GAMMA)
    c1: float = 0.15
    c2: float = 0.10
    censoring: str = "rate"

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("group sizes must be at least 1")
        _check_prop("p01", self.p01)
        _check_prop("p00", self.p00)
        _check_alpha(self.alpha)
        _check_censoring(self.censoring, (self.c1, self.c2))

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def true_theta(self) -> ParameterVector:
        return ParameterVector(
            true_params_binary(self.p01, self.p00, self.alpha), self.gamma, self.alpha
        )

    def censoring_rates(self) -> tuple[float, float]:
        if self.censoring == "rate":
            return self.c1, self.c2
        theta = self.true_theta()
        return (
            calibrate_censoring_rate(self.c1, 1.0, theta),
            calibrate_censoring_rate(self.c2, 0.0, theta),
        )


@dataclass(frozen=True)
class ContinuousScenario:
    """Covariate drawn from Uniform(x_min, x_max) with cure rate falling in x."""

    n: int = 300
    p_high: float = 0.65
    p_low: float = 0.05
    x_min: float = 0.1
    x_max: float = 20.0
    alpha: float = 0.5
    gamma: WeibullParams = field(default=DEFAULT_GAMMA)
    c: float = 0.15
    censoring: str = "rate"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")
        _check_prop("p_high", self.p_high)
        _check_prop("p_low", self.p_low)
        if not self.p_low < self.p_high:
            raise ValueError("p_low must be below p_high")
        _check_alpha(self.alpha)
        _check_censoring(self.censoring, (self.c,))

    def true_theta(self) -> ParameterVector:
        beta = true_params_continuous(self.p_high, self.p_low, self.x_min, self.x_max, self.alpha)
        return ParameterVector(beta, self.gamma, self.alpha)

    def censoring_rate(self) -> float:
        if self.censoring == "rate":
            return self.c
        # match the target at the midpoint of the covariate range
        mid = 0.5 * (self.x_min + self.x_max)
        return calibrate_censoring_rate(self.c, mid, self.true_theta())


def _check_censoring(mode, values):
    if mode == "rate":
        if any(not v > 0 for v in values):
            raise ValueError("censoring rates must be positive")
    elif mode == "proportion":
        if any(not 0 < v < 1 for v in values):
            raise ValueError("target censoring proportions must lie in (0, 1)")
    else:
        raise ValueError(f"censoring must be 'rate' or 'proportion', got {mode!r}")


def _draw_group(rng, n, x, theta: ParameterVector, rate):
    # per subject: U (cure indicator), C (censoring), U* (susceptible time)
    u = rng.uniform(size=n)
    c = rng.exponential(1.0 / rate, size=n)
    u_star = rng.uniform(size=n)
    x = np.asarray(x, dtype=float)
    p0 = np.broadcast_to(cure_rate(x.reshape(-1, 1), theta), (n,))
    phi = np.broadcast_to(covariate_link(theta.alpha, theta.beta[0] + theta.beta[1] * x), (n,))
    cured = u <= p0
    t = np.full(n, np.inf)
    live = ~cured
    if np.any(live):
        t[live] = susceptible_time(u_star[live], p0[live], phi[live], theta.alpha, theta.gamma)
    y = np.minimum(t, c)
    delta = (t <= c).astype(np.int8)
    return y, delta, cured


def generate_binary(scenario: BinaryScenario, seed: int, index: int = 0) -> Dataset:
    """Group 1 (x = 1, rate c1) rows first, then group 2 (x = 0, rate c2)."""
    rng = rng_stream(seed, index)
    theta = scenario.true_theta()
    r1, r2 = scenario.censoring_rates()
    y1, d1, _ = _draw_group(rng, scenario.n1, 1.0, theta, r1)
    y0, d0, _ = _draw_group(rng, scenario.n2, 0.0, theta, r2)
    x = np.concatenate([np.ones(scenario.n1), np.zeros(scenario.n2)])
    return Dataset(np.concatenate([y1, y0]), np.concatenate([d1, d0]), x.reshape(-1, 1), ("x",))


def generate_continuous(scenario: ContinuousScenario, seed: int, index: int = 0) -> Dataset:
    rng = rng_stream(seed, index)
    theta = scenario.true_theta()
    x = rng.uniform(scenario.x_min, scenario.x_max, size=scenario.n)
    y, delta, _ = _draw_group(rng, scenario.n, x, theta, scenario.censoring_rate())
    return Dataset(y, delta, x.reshape(-1, 1), ("x",))


def generate(scenario, seed: int, index: int = 0) -> Dataset:
    if isinstance(scenario, BinaryScenario):
        return generate_binary(scenario, seed, index)
    if isinstance(scenario, ContinuousScenario):
        return generate_continuous(scenario, seed, index)
    raise TypeError(f"unknown scenario type {type(scenario).__name__}")


def expected_censoring(rate: float, x: float, theta: ParameterVector) -> float:
    """P(delta = 0) at covariate ``x`` under exponential censoring ``rate``."""
    from .model import population_density

    # P(T < C) = int f_p(t) exp(-rate t) dt; the cured never fail
    val, _ = integrate.quad(
        lambda t: population_density(t, [x], theta) * math.exp(-rate * t),
        0.0,
        np.inf,
        limit=200,
    )
    return 1.0 - val


def calibrate_censoring_rate(target: float, x: float, theta: ParameterVector) -> float:
    """Exponential rate whose expected censoring proportion equals ``target``."""
    p0 = float(cure_rate([x], theta))
    if not p0 < target < 1.0:
        raise ValueError(
            f"target censoring {target} unreachable: must exceed the cure rate {p0:.4f}"
        )
    return optimize.brentq(
        lambda r: expected_censoring(r, x, theta) - target, 1e-8, 1e6, xtol=1e-12
    )
