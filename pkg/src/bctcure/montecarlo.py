"""Monte-Carlo bias/RMSE study of SQH fits on simulated data."""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .inference import ClampWarning, DegenerateDataError, fit_model, initial_values
from .model import ParameterVector, cure_rate, population_survival
from .simulation import BinaryScenario, ContinuousScenario, generate, rng_stream
from .sqh import AdmissibleBox, SqhConfig, SqhStallError

__all__ = [
    "INIT_STRATEGIES",
    "MetricRow",
    "McReport",
    "McFailure",
    "monte_carlo_study",
    "perturbed_start",
]

INIT_STRATEGIES = ("perturbed", "km", "truth", "oracle")


class McFailure(RuntimeError):
    """Every replication of a study failed."""


def perturbed_start(theta: ParameterVector, rng: np.random.Generator, spread: float = 0.2):
    """True parameters scaled coordinate-wise by ``1 + U(-spread, spread)``."""
    v = theta.to_array()
    v = v * (1.0 + rng.uniform(-spread, spread, size=v.size))
    box = AdmissibleBox.for_bct(theta.p)
    return ParameterVector.from_array(np.clip(v, box.lower, box.upper))


def _derived(theta: ParameterVector, groups, targets):
    rates = [float(cure_rate([g], theta)) for g in groups]
    surv = [float(population_survival(y, [x], theta)) for y, x in targets]
    return np.array(rates + surv)


def _replicate(task):
    scenario, config, strategy, spread, seed, index, groups, targets = task
    truth = scenario.true_theta()
    if strategy == "oracle":
        return "ok", truth.to_array(), _derived(truth, groups, targets), 0
    data = generate(scenario, seed, index)
    try:
        if strategy == "perturbed":
            init = perturbed_start(truth, rng_stream(seed, index, 1), spread)
        elif strategy == "truth":
            init = truth
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ClampWarning)
                init = initial_values(data)
        fit = fit_model(data, config, init=init)
    except (SqhStallError, FloatingPointError, DegenerateDataError):
        return "diverged", None, None, 0
    est = fit.theta_hat.to_array()
    if not (math.isfinite(fit.log_likelihood) and np.all(np.isfinite(est))):
        return "diverged", None, None, fit.result.iterations
    status = "ok" if fit.converged else "capped"
    return status, est, _derived(fit.theta_hat, groups, targets), fit.result.iterations


@dataclass(frozen=True)
class MetricRow:
    name: str
    true: float
    mean: float
    bias: float
    mae: float
    rmse: float


@dataclass(eq=False)
class McReport:
    """Bias summaries for parameters and derived quantities.

    ``bias`` is ``|mean estimate - true|``; ``mae`` is the mean absolute
    error, shown alongside since absolute bias is read both ways.
    """

    label: str
    rows: list[MetricRow]
    requested: int
    completed: int
    diverged: int
    capped: int
    wall_time: float
    seed: int
    settings: dict = field(default_factory=dict)
    estimates: np.ndarray | None = None

    def row(self, name: str) -> MetricRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_text(self) -> str:
        head = f"{'quantity':<22}{'true':>10}{'mean':>10}{'bias':>10}{'MAE':>10}{'RMSE':>10}"
        lines = [self.label, head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.name:<22}{r.true:>10.3f}{r.mean:>10.3f}{r.bias:>10.3f}{r.mae:>10.3f}{r.rmse:>10.3f}"
            )
        lines.append("-" * len(head))
        lines.append(
            f"replications: requested={self.requested} completed={self.completed} "
            f"diverged={self.diverged} iteration_cap={self.capped}"
        )
        lines.append(f"seed={self.seed} wall_time_seconds={self.wall_time:.2f}")
        for k, v in self.settings.items():
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "quantity", "metric", "value"])
        for r in self.rows:
            for metric in ("true", "mean", "bias", "mae", "rmse"):
                w.writerow([self.label, r.name, metric, repr(getattr(r, metric))])
        for metric in ("requested", "completed", "diverged", "capped", "seed"):
            w.writerow([self.label, "replications", metric, getattr(self, metric)])
        w.writerow([self.label, "replications", "wall_time", f"{self.wall_time:.3f}"])
        return buf.getvalue()


def _summaries(names, truth, est):
    err = est - truth
    rows = []
    for j, name in enumerate(names):
        rows.append(
            MetricRow(
                name,
                float(truth[j]),
                float(est[:, j].mean()),
                float(abs(err[:, j].mean())),
                float(np.abs(err[:, j]).mean()),
                float(np.sqrt(np.mean(err[:, j] ** 2))),
            )
        )
    return rows


def monte_carlo_study(
    scenario: BinaryScenario | ContinuousScenario,
    M: int,
    fit_config: SqhConfig | None = None,
    init_strategy: str = "perturbed",
    report_targets=(),
    seed: int = 0,
    workers: int = 1,
    spread: float = 0.2,
    label: str | None = None,
) -> McReport:
    """Run ``M`` simulate-and-fit replications and summarize the errors.

    ``init_strategy`` is one of ``perturbed`` (truth times 1 + U(-spread,
    spread)), ``km`` (Kaplan-Meier starting values), ``truth`` or
    ``oracle`` (no fitting; estimates equal the truth). Replication ``i``
    simulates from stream ``(seed, i)`` and perturbs from ``(seed, i, 1)``.
    Diverged fits are dropped from the summaries; fits that stop at the
    iteration cap are kept and counted.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if init_strategy not in INIT_STRATEGIES:
        raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}")
    config = fit_config or SqhConfig()
    truth = scenario.true_theta()
    groups = (1.0, 0.0) if isinstance(scenario, BinaryScenario) else ()
    targets = tuple((float(y), float(x)) for y, x in report_targets)
    tasks = [
        (scenario, config, init_strategy, spread, seed, i, groups, targets) for i in range(M)
    ]
    start = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, M // (4 * workers))))
    else:
        results = [_replicate(t) for t in tasks]
    elapsed = time.perf_counter() - start

    good = [r for r in results if r[0] != "diverged"]
    if not good:
        raise McFailure(f"all {M} replications failed")
    est = np.vstack([r[1] for r in good])
    rows = _summaries(truth.names(), truth.to_array(), est)
    derived_names = [f"p0[x={g:g}]" for g in groups] + [f"S_p(y={y:g}|x={x:g})" for y, x in targets]
    if derived_names:
        derived_truth = _derived(truth, groups, targets)
        rows += _summaries(derived_names, derived_truth, np.vstack([r[2] for r in good]))
    return McReport(
        label=label or _describe(scenario),
        rows=rows,
        requested=M,
        completed=len(good),
        diverged=M - len(good),
        capped=sum(r[0] == "capped" for r in good),
        wall_time=elapsed,
        seed=seed,
        settings={
            "init": init_strategy,
            "epsilon0": config.epsilon0,
            "lambda": config.lam,
            "rho": config.rho,
            "zeta": config.zeta,
            "kappa": config.kappa,
            "max_iter": config.max_iter,
        },
        estimates=est,
    )


def _describe(scenario) -> str:
    if isinstance(scenario, BinaryScenario):
        return (
            f"binary n={scenario.n} (p01,p00)=({scenario.p01:g},{scenario.p00:g}) "
            f"alpha={scenario.alpha:g}"
        )
    return (
        f"continuous n={scenario.n} (p_high,p_low)=({scenario.p_high:g},{scenario.p_low:g}) "
        f"alpha={scenario.alpha:g}"
    )
