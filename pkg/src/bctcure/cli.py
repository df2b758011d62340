"""Command-line interface: ``bctcure simulate | fit | mc-study | bootstrap | residuals | km``.

Exit codes: 0 success, 2 config or usage error, 3 data error,
4 fit stopped at the iteration cap, 5 optimizer stall or total failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .config import ConfigError, RunConfig, load_config
from .dataio import DataError, read_dataset, read_theta, theta_to_text, two_column_csv, write_dataset
from .inference import (
    BootstrapFailure,
    ClampWarning,
    DegenerateDataError,
    FitReport,
    bootstrap_se,
    fit_model,
    initial_guess,
    kaplan_meier,
    ks_normality,
    quantile_residuals,
)
from .montecarlo import McFailure, monte_carlo_study
from .simulation import BinaryScenario, generate
from .sqh import SqhStallError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NOCONV, EXIT_STALL = 0, 2, 3, 4, 5


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _Fail(EXIT_DATA, f"cannot create output directory {out}: {exc.strerror}")
    return out


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise _Fail(EXIT_DATA, f"cannot write {path}: {exc.strerror}")
    print(f"wrote {path}")


def _read(path):
    try:
        return read_dataset(path)
    except (DataError, ValueError) as exc:
        raise _Fail(EXIT_DATA, str(exc))


def _levels(data, limit=10):
    if data.x.shape[1] != 1:
        return []
    lv = np.unique(data.x[:, 0])
    return [float(v) for v in lv] if lv.size <= limit else []


def cmd_simulate(cfg: RunConfig, args) -> int:
    data = generate(cfg.scenario, cfg.seed)
    out = _out_dir(cfg)
    path = out / (args.output or "data.csv")
    try:
        write_dataset(data, path)
    except OSError as exc:
        raise _Fail(EXIT_DATA, str(exc))
    cens = 100.0 * (1.0 - data.delta.mean())
    print(f"wrote {path}")
    print(f"n = {data.n}, censored = {cens:.1f}%")
    if isinstance(cfg.scenario, BinaryScenario):
        g1 = int(np.count_nonzero(data.x[:, 0] == 1))
        print(f"group sizes: x=1: {g1}, x=0: {data.n - g1}")
    return EXIT_OK


def _fit(cfg: RunConfig, data):
    grid = np.linspace(0.0, 1.0, cfg.alpha_grid_points) if cfg.alpha_grid_points > 1 else [0.5]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ClampWarning)
        try:
            guess = initial_guess(data, cfg.extreme_groups, grid)
        except (DegenerateDataError, ValueError) as exc:
            raise _Fail(EXIT_DATA, f"cannot build starting values: {exc}")
    notes = [str(w.message) for w in caught if issubclass(w.category, ClampWarning)]
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    try:
        fit = fit_model(data, cfg.sqh, init=guess.theta)
    except SqhStallError as exc:
        raise _Fail(EXIT_STALL, f"optimizer stalled: {exc}")
    except FloatingPointError as exc:
        raise _Fail(EXIT_DATA, f"log-likelihood evaluation failed: {exc}")
    return fit, notes


def cmd_fit(cfg: RunConfig, args) -> int:
    data = _read(args.data)
    fit, notes = _fit(cfg, data)
    groups = cfg.group_values or _levels(data)
    report = FitReport.from_fit(fit, groups)
    report.notes.extend(notes)
    out = _out_dir(cfg)
    _write(out / "fit_report.txt", report.to_keyvalue())
    _write(out / "fit_estimates.csv", report.to_table())
    _write(out / "theta.txt", theta_to_text(fit.theta_hat))
    _write(out / "sqh_trace.csv", fit.result.trace_table())
    print(report.to_keyvalue(), end="")
    if not fit.converged:
        print("fit stopped at the iteration cap", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def _sweep_points(cfg: RunConfig):
    field_of = {"zeta": "zeta", "lambda": "lam", "rho": "rho", "epsilon": "epsilon0"}
    if not cfg.sweeps:
        return [("base", cfg.sqh)]
    points = []
    for name, values in cfg.sweeps.items():
        for val in values:
            try:
                sq = dataclasses.replace(cfg.sqh, **{field_of[name]: val})
            except ValueError as exc:
                raise _Fail(EXIT_CONFIG, f"[mc] sweep_{name}: {exc}")
            points.append((f"{name}={val:g}", sq))
    return points


def cmd_mc_study(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    texts = []
    for tag, sq in _sweep_points(cfg):
        try:
            report = monte_carlo_study(
                cfg.scenario,
                cfg.replications,
                sq,
                cfg.init,
                cfg.report_targets,
                cfg.seed,
                cfg.workers,
                cfg.spread,
            )
        except McFailure as exc:
            raise _Fail(EXIT_STALL, str(exc))
        report.label = f"{report.label} [{tag}]"
        stem = f"mc_{tag.replace('=', '_')}"
        _write(out / f"{stem}.txt", report.to_text())
        _write(out / f"{stem}.csv", report.to_csv())
        texts.append(report.to_text())
        print(
            f"timing [{tag}]: {report.wall_time:.2f} s for {report.requested} replications "
            f"({report.diverged} diverged)"
        )
    _write(out / "mc_report.txt", "\n".join(texts))
    return EXIT_OK


def cmd_bootstrap(cfg: RunConfig, args) -> int:
    data = _read(args.data)
    grid = np.linspace(0.0, 1.0, cfg.alpha_grid_points) if cfg.alpha_grid_points > 1 else [0.5]
    try:
        boot = bootstrap_se(data, cfg.resamples, cfg.sqh, cfg.seed, cfg.workers, grid)
    except BootstrapFailure as exc:
        raise _Fail(EXIT_STALL, str(exc))
    out = _out_dir(cfg)
    lines = [f"resamples = {boot.requested}", f"failed = {boot.failed}", f"seed = {cfg.seed}"]
    lines += [f"se_{n} = {float(v)!r}" for n, v in zip(boot.names, boot.standard_errors)]
    text = "\n".join(lines) + "\n"
    _write(out / "bootstrap_se.txt", text)
    _write(
        out / "bootstrap_se.csv",
        "parameter,std_error\n"
        + "".join(f"{n},{float(v)!r}\n" for n, v in zip(boot.names, boot.standard_errors)),
    )
    print(text, end="")
    return EXIT_OK


def cmd_residuals(cfg: RunConfig, args) -> int:
    data = _read(args.data)
    try:
        theta = read_theta(args.theta)
    except DataError as exc:
        raise _Fail(EXIT_DATA, str(exc))
    if theta.p != data.design.shape[1]:
        raise _Fail(EXIT_DATA, "parameter file does not match the dataset's covariates")
    res = quantile_residuals(data, theta, cfg.n_sets, cfg.seed)
    d, pval = ks_normality(res)
    n = res.size
    theo = ndtri((np.arange(1, n + 1) - 0.5) / n)
    out = _out_dir(cfg)
    _write(out / "qq.csv", two_column_csv(("theoretical", "residual"), theo, res))
    text = f"n = {n}\nn_sets = {cfg.n_sets}\nks_statistic = {float(d)!r}\nks_p_value = {float(pval)!r}\n"
    _write(out / "residuals.txt", text)
    print(text, end="")
    return EXIT_OK


def cmd_km(cfg: RunConfig, args) -> int:
    data = _read(args.data)
    out = _out_dir(cfg)
    levels = _levels(data)
    groups = [(f"x_{v:g}", data.x[:, 0] == v) for v in levels] or [("all", np.ones(data.n, bool))]
    for tag, mask in groups:
        curve = kaplan_meier(data.y[mask], data.delta[mask])
        times = np.concatenate([[0.0], curve.times])
        surv = np.concatenate([[1.0], curve.survival])
        _write(out / f"km_{tag}.csv", two_column_csv(("time", "survival"), times, surv))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "mc-study": cmd_mc_study,
    "bootstrap": cmd_bootstrap,
    "residuals": cmd_residuals,
    "km": cmd_km,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--workers", type=int, help="parallel workers (overrides config)")

    parser = argparse.ArgumentParser(prog="bctcure", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="generate a censored dataset")
    p.add_argument("--output", help="file name inside the output directory (default data.csv)")
    for name, helptext in (
        ("fit", "fit the BCT model by SQH"),
        ("bootstrap", "bootstrap standard errors"),
        ("km", "Kaplan-Meier curves per covariate level"),
    ):
        q = sub.add_parser(name, parents=[common], help=helptext)
        q.add_argument("data", help="CSV with header y,delta,x1,...")
    sub.add_parser("mc-study", parents=[common], help="Monte-Carlo bias/RMSE study")
    r = sub.add_parser("residuals", parents=[common], help="quantile residuals and KS test")
    r.add_argument("data", help="CSV with header y,delta,x1,...")
    r.add_argument("--theta", required=True, help="parameter file written by 'fit'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            cfg.workers = args.workers
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
