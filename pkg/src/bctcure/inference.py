"""Fitting workflow for observed data: Kaplan-Meier curves, starting values,
SQH fits, bootstrap standard errors and quantile-residual diagnostics."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov, ndtr, ndtri

from .lifetime import MomentMatchError, WeibullParams, weibull_moment_match
from .model import (
    Dataset,
    ParameterVector,
    cure_rate,
    log_likelihood,
    loglik_vector,
    parameter_names,
    population_survival,
)
from .simulation import bct_link_inverse, rng_stream
from .sqh import AdmissibleBox, SqhConfig, SqhResult, SqhStallError, sqh_maximize

__all__ = [
    "KmCurve",
    "kaplan_meier",
    "ClampWarning",
    "DegenerateDataError",
    "InitialGuess",
    "initial_guess",
    "initial_values",
    "FitOutcome",
    "fit_model",
    "BootstrapResult",
    "BootstrapFailure",
    "bootstrap_se",
    "quantile_residuals",
    "ks_normality",
    "group_cure_rates",
    "FitReport",
    "DEFAULT_ALPHA_GRID",
]

DEFAULT_ALPHA_GRID = np.linspace(0.0, 1.0, 21)
CURE_CLAMP = (0.01, 0.99)


class ClampWarning(UserWarning):
    """A Kaplan-Meier cure estimate hit 0 or 1 and was clamped."""


class DegenerateDataError(ValueError):
    """The data cannot support the requested computation."""


class BootstrapFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class KmCurve:
    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def __call__(self, t):
        """Right-continuous step function evaluated at ``t``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        values = np.concatenate([[1.0], self.survival])[idx]
        return values if values.ndim else float(values)


def kaplan_meier(y, delta) -> KmCurve:
    """Product-limit estimate; censored records at an event time stay at risk."""
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta)
    if y.size == 0:
        raise DegenerateDataError("Kaplan-Meier needs at least one observation")
    times = np.unique(y[delta == 1])
    order = np.sort(y)
    at_risk = y.size - np.searchsorted(order, times, side="left")
    events = np.array([np.count_nonzero((y == t) & (delta == 1)) for t in times], dtype=int)
    survival = np.cumprod(1.0 - events / at_risk)
    return KmCurve(times, survival, at_risk, events)


def _group_masks(data: Dataset, extreme_groups):
    x = data.x[:, 0]
    if extreme_groups is not None:
        lo, hi = extreme_groups
        return (x == lo, float(lo)), (x == hi, float(hi))
    levels = np.unique(x)
    if levels.size <= 10:
        return (x == levels[0], float(levels[0])), (x == levels[-1], float(levels[-1]))
    # continuous covariate: outer quartiles represented by their medians
    q1, q3 = np.quantile(x, [0.25, 0.75])
    low, high = x <= q1, x >= q3
    return (low, float(np.median(x[low]))), (high, float(np.median(x[high])))


@dataclass(eq=False)
class InitialGuess:
    theta: ParameterVector
    cure_estimates: tuple[float, float]
    group_x: tuple[float, float]
    clamped: bool
    candidates: list[tuple[float, float]] = field(default_factory=list)


def _km_cure(y, delta):
    curve = kaplan_meier(y, delta)
    return curve(y.max())


def initial_guess(
    data: Dataset,
    extreme_groups: tuple[float, float] | None = None,
    alpha_grid=DEFAULT_ALPHA_GRID,
) -> InitialGuess:
    """Starting values from Kaplan-Meier cure estimates of two extreme groups.

    For every ``alpha`` on the grid the two cure estimates are turned into
    ``(beta0, beta1)``, ``gamma`` is moment-matched to the event times,
    and the candidate with the largest log-likelihood wins.
    ``extreme_groups`` defaults to the smallest and largest covariate level,
    or to the outer quartiles of a continuous covariate.
    """
    alpha_grid = np.atleast_1d(np.asarray(alpha_grid, dtype=float))
    if alpha_grid.size == 0 or np.any((alpha_grid < 0) | (alpha_grid > 1)):
        raise ValueError("alpha grid must be nonempty and inside [0, 1]")
    if data.x.shape[1] > 1:
        raise ValueError("starting values are defined for a single covariate")

    clamped = False
    if data.x.shape[1] == 0:
        groups = [(np.ones(data.n, bool), 0.0)]
    else:
        groups = list(_group_masks(data, extreme_groups))
        if not all(m.any() for m, _ in groups):
            raise DegenerateDataError("an extreme covariate group is empty")
        if groups[0][1] == groups[1][1]:
            groups = groups[:1]

    cures, xs = [], []
    for mask, xval in groups:
        p = _km_cure(data.y[mask], data.delta[mask])
        if not CURE_CLAMP[0] <= p <= CURE_CLAMP[1]:
            p = min(max(p, CURE_CLAMP[0]), CURE_CLAMP[1])
            clamped = True
        cures.append(p)
        xs.append(xval)
    if clamped:
        warnings.warn(
            f"Kaplan-Meier cure estimate clamped to {CURE_CLAMP}", ClampWarning, stacklevel=2
        )

    # event times carry the susceptible lifetime; fall back to all times
    times = data.y[data.delta == 1]
    if times.size < 2:
        times = data.y
    mean = float(np.mean(times))
    var = float(np.var(times, ddof=1)) if times.size > 1 else 0.0
    if not mean > 0:
        raise DegenerateDataError("observed times are all zero")
    try:
        gamma = weibull_moment_match(mean, var) if var > 0 else None
    except MomentMatchError:
        gamma = None
    if gamma is None:
        warnings.warn(
            "moment matching failed; starting from an exponential lifetime",
            ClampWarning,
            stacklevel=2,
        )
        clamped = True
        gamma = WeibullParams(1.0, 1.0 / mean)

    p = data.design.shape[1]
    best, best_ll, cands = None, -math.inf, []
    for alpha in alpha_grid:
        etas = [bct_link_inverse(c, alpha) for c in cures]
        if len(etas) == 2:
            beta1 = (etas[1] - etas[0]) / (xs[1] - xs[0])
            beta0 = etas[0] - beta1 * xs[0]
            beta = [beta0, beta1]
        else:
            beta = [etas[0]] + [0.0] * (p - 1)
        theta = ParameterVector(beta, gamma, alpha)
        ll = log_likelihood(theta, data)
        cands.append((float(alpha), ll))
        if best is None or ll > best_ll:
            best, best_ll = theta, ll
    cure_pair = (cures[0], cures[-1])
    return InitialGuess(best, cure_pair, (xs[0], xs[-1]), clamped, cands)


def initial_values(data: Dataset, extreme_groups=None, alpha_grid=DEFAULT_ALPHA_GRID):
    return initial_guess(data, extreme_groups, alpha_grid).theta


@dataclass(eq=False)
class FitOutcome:
    theta_hat: ParameterVector
    initial: ParameterVector
    result: SqhResult

    @property
    def converged(self) -> bool:
        return self.result.converged

    @property
    def log_likelihood(self) -> float:
        return self.result.objective


def fit_model(
    data: Dataset,
    config: SqhConfig | None = None,
    init: ParameterVector | None = None,
    alpha_grid=DEFAULT_ALPHA_GRID,
) -> FitOutcome:
    """Maximum likelihood fit by SQH, starting from :func:`initial_values`."""
    config = config or SqhConfig()
    if init is None:
        init = initial_values(data, alpha_grid=alpha_grid)
    box = AdmissibleBox.for_bct(data.design.shape[1])
    start = np.clip(init.to_array(), box.lower, box.upper)
    result = sqh_maximize(lambda v: loglik_vector(v, data), start, box, config)
    return FitOutcome(ParameterVector.from_array(result.theta_hat), init, result)


def _canonical(data: Dataset) -> Dataset:
    keys = [data.x[:, j] for j in range(data.x.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys + [data.delta, data.y])
    return data.subset(order)


def _bootstrap_one(args):
    data, config, seed, b, alpha_grid = args
    rng = rng_stream(seed, b)
    idx = rng.integers(0, data.n, size=data.n)
    sample = data.subset(idx)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClampWarning)
            fit = fit_model(sample, config, alpha_grid=alpha_grid)
    except (SqhStallError, FloatingPointError, DegenerateDataError, ValueError):
        return None
    if not fit.converged:
        return None
    return fit.theta_hat.to_array()


@dataclass(eq=False)
class BootstrapResult:
    standard_errors: np.ndarray
    estimates: np.ndarray
    requested: int
    failed: int
    names: list[str]


def bootstrap_se(
    data: Dataset,
    B: int,
    fit_config: SqhConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    alpha_grid=DEFAULT_ALPHA_GRID,
) -> BootstrapResult:
    """Nonparametric case-resampling bootstrap standard errors.

    Rows are put in a canonical order first and resample ``b`` draws its
    indices from stream ``(seed, b)``, so the result depends neither on the
    input row order nor on ``workers``.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    fit_config = fit_config or SqhConfig()
    data = _canonical(data)
    tasks = [(data, fit_config, seed, b, alpha_grid) for b in range(B)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bootstrap_one, tasks))
    else:
        results = [_bootstrap_one(t) for t in tasks]
    good = [r for r in results if r is not None]
    failed = B - len(good)
    if failed > B / 2 or len(good) < 2:
        raise BootstrapFailure(f"{failed} of {B} bootstrap fits failed")
    est = np.vstack(good)
    se = est.std(axis=0, ddof=1)
    return BootstrapResult(se, est, B, failed, parameter_names(data.design.shape[1]))


def quantile_residuals(data: Dataset, theta: ParameterVector, n_sets: int = 5, seed: int = 0):
    """Randomized quantile residuals, element-wise median of sorted sets.

    Events use ``u = 1 - S_p(y | x)``; censored records draw ``u`` uniformly
    on ``(1 - S_p(y | x), 1)``. Set ``s`` uses stream ``(seed, s)``.
    """
    if n_sets < 1:
        raise ValueError("n_sets must be at least 1")
    s = np.asarray(population_survival(data.y, data.x, theta), dtype=float)
    lower = 1.0 - s
    event = data.delta == 1
    sets = []
    for k in range(n_sets):
        rng = rng_stream(seed, k)
        draw = rng.uniform(size=data.n)
        u = np.where(event, lower, lower + draw * s)
        u = np.clip(u, 1e-15, 1.0 - 1e-15)
        sets.append(np.sort(ndtri(u)))
    return np.median(np.vstack(sets), axis=0)


def ks_normality(residuals) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test against the standard normal.

    The p-value uses the limiting Kolmogorov distribution of ``sqrt(n) D``.
    """
    r = np.sort(np.asarray(residuals, dtype=float))
    n = r.size
    if n < 5:
        raise ValueError("KS test needs at least 5 residuals")
    cdf = ndtr(r)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    return d, float(kolmogorov(math.sqrt(n) * d))


def group_cure_rates(theta: ParameterVector, group_values) -> np.ndarray:
    """Cure rate for each covariate value (scalars or vectors)."""
    values = np.asarray(group_values, dtype=float)
    if values.ndim <= 1:
        values = values.reshape(-1, theta.p - 1)
    return np.asarray(cure_rate(values, theta), dtype=float)


@dataclass(eq=False)
class FitReport:
    theta_hat: ParameterVector
    log_likelihood: float
    iterations: int
    converged: bool
    wall_time: float
    cure_rates: dict[float, float] = field(default_factory=dict)
    standard_errors: np.ndarray | None = None
    residual_diagnostics: tuple[float, float] | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.standard_errors is not None and np.any(np.asarray(self.standard_errors) < 0):
            raise ValueError("standard errors must be nonnegative")

    @classmethod
    def from_fit(cls, fit: FitOutcome, group_values=()) -> FitReport:
        rates = group_cure_rates(fit.theta_hat, list(group_values)) if len(group_values) else []
        return cls(
            fit.theta_hat,
            fit.log_likelihood,
            fit.result.iterations,
            fit.converged,
            fit.result.wall_time,
            {float(g): float(r) for g, r in zip(group_values, rates)},
        )

    def to_keyvalue(self) -> str:
        lines = [
            f"log_likelihood = {float(self.log_likelihood)!r}",
            f"iterations = {self.iterations}",
            f"converged = {str(self.converged).lower()}",
            f"wall_time_seconds = {self.wall_time:.3f}",
        ]
        for name, v in zip(self.theta_hat.names(), self.theta_hat.to_array()):
            lines.append(f"{name} = {float(v)!r}")
        if self.standard_errors is not None:
            for name, v in zip(self.theta_hat.names(), self.standard_errors):
                lines.append(f"se_{name} = {float(v)!r}")
        for g, r in self.cure_rates.items():
            lines.append(f"cure_rate[x={g:g}] = {r!r}")
        if self.residual_diagnostics is not None:
            d, pval = self.residual_diagnostics
            lines.append(f"ks_statistic = {d!r}")
            lines.append(f"ks_p_value = {pval!r}")
        if self.theta_hat.alpha in (0.0, 1.0):
            lines.append(f"note = alpha estimate on the boundary ({self.theta_hat.alpha:g})")
        lines.extend(f"note = {n}" for n in self.notes)
        return "\n".join(lines) + "\n"

    def to_table(self, delimiter: str = ",") -> str:
        se = self.standard_errors
        rows = [delimiter.join(["parameter", "estimate", "std_error"])]
        for j, (name, v) in enumerate(zip(self.theta_hat.names(), self.theta_hat.to_array())):
            rows.append(delimiter.join([name, repr(float(v)), "" if se is None else repr(float(se[j]))]))
        return "\n".join(rows) + "\n"
