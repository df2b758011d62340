"""Box-Cox transformation (BCT) cure rate model.

The population survival function is obtained by applying the Box-Cox
transform to ``S_p`` and equating it to ``-phi(alpha, x) F(y)``; ``alpha = 1``
gives the mixture cure model and ``alpha = 0`` the promotion time cure model.
Everything here is evaluated on the log scale and only exponentiated at the
public boundary, which keeps small ``alpha`` and large ``|x'beta|`` accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lifetime import WeibullParams, weibull_logpdf, weibull_logsf

__all__ = [
    "ALPHA_ZERO",
    "ParameterVector",
    "Observation",
    "Dataset",
    "box_cox",
    "covariate_link",
    "population_survival",
    "population_density",
    "cure_rate",
    "log_likelihood",
    "loglik_vector",
]

# below this the exact alpha = 0 formulas are used
ALPHA_ZERO = 1e-12


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Model parameters ``theta = (beta, gamma, alpha)``.

    ``beta[0]`` is the intercept. The flat view is ordered
    ``(beta_0, ..., beta_{p-1}, gamma1, gamma2, alpha)``.
    """

    beta: np.ndarray
    gamma: WeibullParams
    alpha: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", float(self.alpha))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")

    @property
    def p(self) -> int:
        return self.beta.size

    @property
    def dim(self) -> int:
        return self.p + 3

    def to_array(self) -> np.ndarray:
        return np.concatenate(
            [self.beta, [self.gamma.gamma1, self.gamma.gamma2, self.alpha]]
        )

    @classmethod
    def from_array(cls, values) -> ParameterVector:
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size < 4:
            raise ValueError("flat parameter vector needs at least 4 entries")
        return cls(v[:-3], WeibullParams(v[-3], v[-2]), v[-1])

    def names(self) -> list[str]:
        return parameter_names(self.p)

    def __eq__(self, other):
        if not isinstance(other, ParameterVector):
            return NotImplemented
        return np.array_equal(self.to_array(), other.to_array())

    def __repr__(self):
        body = ", ".join(f"{n}={v:.6g}" for n, v in zip(self.names(), self.to_array()))
        return f"ParameterVector({body})"


def parameter_names(p: int) -> list[str]:
    return [f"beta{j}" for j in range(p)] + ["gamma1", "gamma2", "alpha"]


@dataclass(frozen=True)
class Observation:
    y: float
    delta: int
    x: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Right-censored survival data held column-wise.

    ``x`` has shape ``(n, p - 1)``; the intercept column is never stored.
    """

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        delta = np.asarray(self.delta).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else np.empty((y.size, 0))
        if y.size == 0:
            raise ValueError("dataset must contain at least one observation")
        if x.shape[0] != y.size or delta.size != y.size:
            raise ValueError("y, delta and x must have the same number of rows")
        if np.any(np.isnan(y)) or np.any(y < 0):
            raise ValueError("observed times must be nonnegative numbers")
        if not np.all((delta == 0) | (delta == 1)):
            raise ValueError("delta must be 0 or 1")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        names = tuple(self.covariate_names) or tuple(
            f"x{j + 1}" for j in range(x.shape[1])
        )
        if len(names) != x.shape[1]:
            raise ValueError("covariate_names does not match covariate columns")
        delta = delta.astype(np.int8)
        for arr in (y, delta, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", names)
        design = np.column_stack([np.ones(y.size), x])
        design.setflags(write=False)
        object.__setattr__(self, "_design", design)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def design(self) -> np.ndarray:
        """Covariates with the implicit leading column of ones."""
        return self._design

    @property
    def records(self) -> list[Observation]:
        return [
            Observation(float(yi), int(di), tuple(float(v) for v in xi))
            for yi, di, xi in zip(self.y, self.delta, self.x)
        ]

    @classmethod
    def from_records(
        cls, records: Sequence[Observation], covariate_names: Sequence[str] = ()
    ) -> Dataset:
        records = list(records)
        if not records:
            raise ValueError("dataset must contain at least one observation")
        widths = {len(r.x) for r in records}
        if len(widths) != 1:
            raise ValueError("covariate dimension differs across observations")
        x = np.array([r.x for r in records], dtype=float).reshape(len(records), -1)
        return cls(
            [r.y for r in records], [r.delta for r in records], x, tuple(covariate_names)
        )

    def subset(self, index) -> Dataset:
        index = np.asarray(index)
        return Dataset(self.y[index], self.delta[index], self.x[index], self.covariate_names)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.x, other.x)
            and self.covariate_names == other.covariate_names
        )

    def __len__(self):
        return self.n


def box_cox(z, alpha: float):
    """``(z**alpha - 1) / alpha``, or ``log z`` at ``alpha = 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("Box-Cox transform needs z > 0")
    if alpha == 0:
        out = np.log(z)
    else:
        out = np.expm1(alpha * np.log(z)) / alpha
    return out if out.ndim else float(out)


def _link_logs(eta, alpha):
    """Return ``(log phi, log(alpha phi), log(1 - alpha phi))``.

    The last two are ``None`` on the alpha = 0 branch.
    """
    if alpha < ALPHA_ZERO:
        return eta, None, None
    shifted = eta + math.log(alpha)
    soft = np.logaddexp(0.0, shifted)
    return eta - soft, shifted - soft, -soft


def covariate_link(alpha: float, eta):
    """``phi = exp(eta) / (1 + alpha exp(eta))``; ``exp(eta)`` at alpha = 0."""
    log_phi, _, _ = _link_logs(np.asarray(eta, dtype=float), alpha)
    out = np.exp(log_phi)
    return out if np.ndim(out) else float(out)


def _log_base(log_aphi, log_1m_aphi, logsf):
    # log(1 - alpha*phi*F) without cancellation in either regime
    x = np.exp(log_aphi) * -np.expm1(logsf)
    small = np.log1p(-np.minimum(x, 0.5))
    big = np.logaddexp(log_1m_aphi, log_aphi + logsf)
    return np.where(x < 0.5, small, big)


def _log_sp(eta, alpha, logsf):
    log_phi, log_aphi, log_1m_aphi = _link_logs(eta, alpha)
    if log_aphi is None:
        return -np.exp(log_phi) * -np.expm1(logsf), log_phi, 0.0
    base = _log_base(log_aphi, log_1m_aphi, logsf)
    return base / alpha, log_phi, base


def _eta(x, beta):
    beta = np.asarray(beta, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != beta.size - 1:
        raise ValueError(
            f"covariate vector has {x.shape[-1]} entries, model expects {beta.size - 1}"
        )
    return beta[0] + x @ beta[1:]


def log_population_survival(y, x, theta: ParameterVector):
    eta = _eta(x, theta.beta)
    logsf = weibull_logsf(y, theta.gamma)
    return _log_sp(eta, theta.alpha, logsf)[0]


def population_survival(y, x, theta: ParameterVector):
    """Population survival ``S_p(y | x)``.

    ``x`` excludes the intercept; a 2-D ``x`` gives one row per time.
    """
    out = np.exp(log_population_survival(y, x, theta))
    return out if np.ndim(out) else float(out)


def log_population_density(y, x, theta: ParameterVector):
    eta = _eta(x, theta.beta)
    logsf = weibull_logsf(y, theta.gamma)
    log_sp, log_phi, base = _log_sp(eta, theta.alpha, logsf)
    return log_sp + log_phi + weibull_logpdf(y, theta.gamma) - base


def population_density(y, x, theta: ParameterVector):
    """Population density ``f_p(y | x) = -dS_p/dy``."""
    out = np.exp(log_population_density(y, x, theta))
    return out if np.ndim(out) else float(out)


def cure_rate(x, theta: ParameterVector):
    """Long-term survival ``p0(x) = lim S_p(y | x)`` as ``y`` grows."""
    eta = _eta(x, theta.beta)
    alpha = theta.alpha
    if alpha < ALPHA_ZERO:
        out = np.exp(-np.exp(eta))
    else:
        # 1 - alpha*phi = 1 / (1 + alpha exp(eta))
        out = np.exp(-np.logaddexp(0.0, eta + math.log(alpha)) / alpha)
    return out if np.ndim(out) else float(out)


def loglik_vector(values, data: Dataset) -> float:
    """Log-likelihood at a flat parameter vector, the optimizer's hot path.

    Returns ``-inf`` when the point is outside the model's domain or a
    term underflows.
    """
    v = np.asarray(values, dtype=float)
    if np.any(np.isnan(v)):
        raise FloatingPointError("log-likelihood evaluated at NaN parameters")
    g1, g2, alpha = v[-3], v[-2], v[-1]
    if not (g1 > 0 and g2 > 0 and 0.0 <= alpha <= 1.0):
        return -math.inf
    eta = data.design @ v[:-3]
    y = data.y
    event = data.delta == 1
    with np.errstate(divide="ignore", over="ignore", invalid="ignore", under="ignore"):
        logz = np.log(g2 * y)
        cumhaz = np.exp(logz / g1)
        logsf = -cumhaz
        log_sp, log_phi, base = _log_sp(eta, alpha, logsf)
        logf = -math.log(g1) - np.log(y) + logz / g1 + logsf
        log_fp = log_sp + log_phi + logf - base
        terms = np.where(event, log_fp, log_sp)
        total = float(np.sum(terms))
    if math.isnan(total) or total == math.inf:
        return -math.inf
    return total


def log_likelihood(theta, data: Dataset) -> float:
    """Censored-data log-likelihood.

    Sums ``log f_p`` over events and ``log S_p`` over censored records.
    ``theta`` may be a :class:`ParameterVector` or a flat array.
    """
    if isinstance(theta, ParameterVector):
        values = theta.to_array()
    else:
        values = np.asarray(theta, dtype=float)
    if values.size != data.design.shape[1] + 3:
        raise ValueError("parameter dimension does not match dataset covariates")
    return loglik_vector(values, data)
