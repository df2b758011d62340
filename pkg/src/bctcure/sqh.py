"""Sequential Quadratic Hamiltonian (SQH) maximizer for box-constrained problems.

The method never touches derivatives. Each outer iteration maximizes the
augmented objective ``l(theta) - eps * ||theta - theta_k||^2`` one coordinate
at a time (all coordinates anchored at ``theta_k``), then accepts the combined
candidate only if ``l`` rose by at least ``rho * tau`` where ``tau`` is the
squared step length. Rejection multiplies ``eps`` by ``lambda``; acceptance
multiplies it by ``zeta``.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "AdmissibleBox",
    "InnerSearchConfig",
    "SqhConfig",
    "TraceEntry",
    "SqhResult",
    "SqhStallError",
    "augmented_objective",
    "golden_section_max",
    "coordinate_candidates",
    "sqh_maximize",
]

Objective = Callable[[np.ndarray], float]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SqhStallError(RuntimeError):
    """The penalty was stepped up too many times without an accepted step."""


@dataclass(frozen=True, eq=False)
class AdmissibleBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel().copy()
        upper = np.asarray(self.upper, dtype=float).ravel().copy()
        if lower.shape != upper.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(lower >= upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self) -> int:
        return self.lower.size

    @classmethod
    def unbounded(cls, dim: int) -> AdmissibleBox:
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @classmethod
    def for_bct(cls, p: int, gamma_floor: float = 1e-10) -> AdmissibleBox:
        """beta free, gamma1, gamma2 >= gamma_floor, alpha in [0, 1]."""
        lower = np.concatenate([np.full(p, -np.inf), [gamma_floor, gamma_floor, 0.0]])
        upper = np.concatenate([np.full(p, np.inf), [np.inf, np.inf, 1.0]])
        return cls(lower, upper)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


@dataclass(frozen=True)
class InnerSearchConfig:
    """Settings for the one-dimensional golden-section subproblems.

    The search window around the anchor has half-width
    ``w0 / sqrt(1 + eps)``.
    """

    w0: float = 10.0
    tol: float = 1e-8
    max_retries: int = 100

    def __post_init__(self):
        if not (self.w0 > 0 and self.tol > 0 and self.max_retries >= 1):
            raise ValueError("inner search settings must be positive")


@dataclass(frozen=True)
class SqhConfig:
    epsilon0: float = 1000.0
    lam: float = 1000.0
    zeta: float = 0.5
    rho: float = 1000.0
    kappa: float = 1e-3
    max_iter: int = 1000
    inner: InnerSearchConfig = field(default_factory=InnerSearchConfig)
    gauss_seidel: bool = False

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError("lam (step-up factor) must exceed 1")
        if not 0 < self.zeta < 1:
            raise ValueError("zeta (step-down factor) must lie in (0, 1)")
        for name in ("epsilon0", "rho", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass(frozen=True, eq=False)
class TraceEntry:
    k: int
    theta: np.ndarray
    objective: float
    epsilon: float
    tau: float
    rejections: int


@dataclass(eq=False)
class SqhResult:
    theta_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    trace: list[TraceEntry]
    wall_time: float
    theta0: np.ndarray
    objective0: float

    @property
    def final_tau(self) -> float:
        return self.trace[-1].tau if self.trace else math.inf

    def trace_table(self, delimiter: str = ",") -> str:
        """Trace as delimited text: iteration, objective, epsilon, tau, rejections."""
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        writer.writerow(["iteration", "objective", "epsilon", "tau", "rejections"])
        writer.writerow([0, repr(float(self.objective0)), "", "", 0])
        for e in self.trace:
            writer.writerow([e.k, repr(float(e.objective)), repr(float(e.epsilon)), repr(float(e.tau)), e.rejections])
        return buf.getvalue()


def augmented_objective(theta, theta_tilde, epsilon: float, objective: Objective) -> float:
    """``l(theta) - epsilon * ||theta - theta_tilde||^2``."""
    theta = np.asarray(theta, dtype=float)
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    if theta.shape != theta_tilde.shape:
        raise ValueError("theta and theta_tilde differ in dimension")
    value = objective(theta)
    if value == -math.inf:
        return -math.inf
    d = theta - theta_tilde
    return value - epsilon * float(d @ d)


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float):
    """Golden-section search for a maximum of ``f`` on ``[a, b]``.

    Returns ``(x, f(x))`` for the best interior probe; endpoints are the
    caller's business.
    """
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _coordinate_max(objective, anchor, base, i, epsilon, box, inner):
    """Maximize the augmented objective over coordinate ``i`` of ``base``.

    The penalty is measured from ``anchor``; for a Jacobi sweep ``base`` and
    ``anchor`` are the same point.
    """
    work = base.copy()
    centre = anchor[i]
    offset = float((base - anchor) @ (base - anchor)) - (base[i] - centre) ** 2

    def g(v):
        work[i] = v
        value = objective(work)
        if value == -math.inf:
            return -math.inf
        return value - epsilon * ((v - centre) ** 2 + offset)

    stay = g(base[i])
    if math.isnan(stay):
        raise FloatingPointError(f"objective is NaN at the current iterate (coordinate {i})")
    w = inner.w0 / math.sqrt(1.0 + epsilon)
    lo = max(box.lower[i], centre - w)
    hi = min(box.upper[i], centre + w)
    best_v, best_val = base[i], stay
    if hi > lo:
        v, val = golden_section_max(g, lo, hi, inner.tol)
        for cand, cval in ((v, val), (lo, g(lo)), (hi, g(hi))):
            if cval > best_val:
                best_v, best_val = cand, cval
    return best_v


def coordinate_candidates(
    theta_k,
    epsilon: float,
    box: AdmissibleBox,
    objective: Objective,
    inner: InnerSearchConfig | None = None,
    gauss_seidel: bool = False,
) -> np.ndarray:
    """One sweep of one-dimensional augmented maximizations.

    By default every coordinate is optimized with the others held at
    ``theta_k`` and the winners are combined afterwards. With
    ``gauss_seidel=True`` each coordinate sees the ones already updated.
    """
    inner = inner or InnerSearchConfig()
    theta_k = np.asarray(theta_k, dtype=float)
    if theta_k.size != box.dimension:
        raise ValueError("theta_k and box differ in dimension")
    out = theta_k.copy()
    for i in range(theta_k.size):
        base = out if gauss_seidel else theta_k
        out[i] = _coordinate_max(objective, theta_k, base, i, epsilon, box, inner)
    return out


def sqh_maximize(
    objective: Objective,
    theta0,
    box: AdmissibleBox,
    config: SqhConfig | None = None,
) -> SqhResult:
    """Maximize ``objective`` over ``box`` with the SQH accept/reject loop.

    Stops once an accepted step has ``tau < kappa`` (converged) or the
    iteration count exceeds ``max_iter``. Raises :class:`SqhStallError`
    when ``inner.max_retries`` consecutive step-ups fail to produce an
    acceptable candidate.
    """
    config = config or SqhConfig()
    start = time.perf_counter()
    theta = np.asarray(theta0, dtype=float).copy()
    if not box.contains(theta):
        raise ValueError("initial point lies outside the admissible box")
    value = objective(theta)
    if not math.isfinite(value):
        raise FloatingPointError(f"objective is not finite at the initial point: {value}")
    theta_start, value_start = theta.copy(), value

    eps = config.epsilon0
    trace: list[TraceEntry] = []
    k = 0
    converged = False
    while True:
        rejections = 0
        while True:
            cand = coordinate_candidates(
                theta, eps, box, objective, config.inner, config.gauss_seidel
            )
            step = cand - theta
            tau = float(step @ step)
            cand_value = objective(cand)
            if cand_value - value >= config.rho * tau:
                break
            eps *= config.lam
            rejections += 1
            if rejections > config.inner.max_retries or not math.isfinite(eps):
                raise SqhStallError(
                    f"no sufficient increase after {rejections} step-ups at iteration {k}"
                )
        used = eps
        eps *= config.zeta
        theta, value = cand, cand_value
        k += 1
        snapshot = theta.copy()
        snapshot.setflags(write=False)
        trace.append(TraceEntry(k, snapshot, value, used, tau, rejections))
        if tau < config.kappa:
            converged = True
            break
        if k > config.max_iter:
            break

    return SqhResult(
        theta_hat=theta,
        objective=value,
        iterations=k,
        converged=converged,
        trace=trace,
        wall_time=time.perf_counter() - start,
        theta0=theta_start,
        objective0=value_start,
    )


def replay_ledger(result: SqhResult, rho: float) -> list[float]:
    """Slack ``l(theta_{k+1}) - l(theta_k) - rho * tau_k`` for every accepted step."""
    prev = result.objective0
    slack = []
    for e in result.trace:
        slack.append(e.objective - prev - rho * e.tau)
        prev = e.objective
    return slack


def is_monotone(values: Sequence[float]) -> bool:
    return all(b >= a for a, b in zip(values, values[1:]))
