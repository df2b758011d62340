"""INI-style run configuration.

Every section and key is optional; missing values fall back to the
defaults below (the standard SQH constants and the binary n = 200 design).
Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .lifetime import WeibullParams
from .montecarlo import INIT_STRATEGIES
from .simulation import BinaryScenario, ContinuousScenario
from .sqh import InnerSearchConfig, SqhConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


SCHEMA: dict[str, dict[str, type]] = {
    "run": {"seed": int, "out": str, "workers": int},
    "scenario": {
        "type": str,
        "n1": int,
        "n2": int,
        "p01": float,
        "p00": float,
        "n": int,
        "p_high": float,
        "p_low": float,
        "x_min": float,
        "x_max": float,
        "alpha": float,
        "gamma1": float,
        "gamma2": float,
        "c1": float,
        "c2": float,
        "c": float,
        "censoring": str,
    },
    "sqh": {
        "epsilon": float,
        "lambda": float,
        "zeta": float,
        "rho": float,
        "kappa": float,
        "max_iter": int,
        "w0": float,
        "inner_tol": float,
        "max_retries": int,
        "gauss_seidel": bool,
    },
    "fit": {"alpha_grid_points": int, "group_values": list, "extreme_groups": list},
    "mc": {
        "replications": int,
        "init": str,
        "spread": float,
        "report_targets": list,
        "sweep_zeta": list,
        "sweep_lambda": list,
        "sweep_rho": list,
        "sweep_epsilon": list,
    },
    "bootstrap": {"resamples": int},
    "residuals": {"n_sets": int},
}

BINARY_KEYS = {"n1", "n2", "p01", "p00", "c1", "c2"}
CONTINUOUS_KEYS = {"n", "p_high", "p_low", "x_min", "x_max", "c"}


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"
    workers: int = 1
    scenario: BinaryScenario | ContinuousScenario = field(default_factory=BinaryScenario)
    sqh: SqhConfig = field(default_factory=SqhConfig)
    alpha_grid_points: int = 21
    group_values: list[float] = field(default_factory=list)
    extreme_groups: tuple[float, float] | None = None
    replications: int = 100
    init: str = "perturbed"
    spread: float = 0.2
    report_targets: list[tuple[float, float]] = field(default_factory=lambda: [(2.0, 0.0), (2.0, 1.0)])
    sweeps: dict[str, list[float]] = field(default_factory=dict)
    resamples: int = 500
    n_sets: int = 5


def _convert(section, key, raw, kind):
    where = f"[{section}] {key}"
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if kind is list:
            return [s.strip() for s in raw.split(",") if s.strip()]
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind.__name__}") from None


def _floats(section, key, items):
    try:
        return [float(s) for s in items]
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a comma-separated list of numbers") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            values[section][key] = _convert(section, key, raw, SCHEMA[section][key])
    return _build(values)


def _build(v: dict) -> RunConfig:
    cfg = RunConfig()
    run = v.get("run", {})
    cfg.seed = run.get("seed", cfg.seed)
    cfg.out = run.get("out", cfg.out)
    cfg.workers = run.get("workers", cfg.workers)
    if cfg.workers < 1:
        raise ConfigError("[run] workers: must be at least 1")

    sc = dict(v.get("scenario", {}))
    kind = sc.pop("type", "binary")
    gamma_keys = {k: sc.pop(k) for k in ("gamma1", "gamma2") if k in sc}
    try:
        gamma = WeibullParams(gamma_keys.get("gamma1", 0.316), gamma_keys.get("gamma2", 0.179))
    except ValueError as exc:
        raise ConfigError(f"[scenario] gamma1/gamma2: {exc}") from None
    if kind == "binary":
        foreign, cls = set(sc) & CONTINUOUS_KEYS, BinaryScenario
    elif kind == "continuous":
        foreign, cls = set(sc) & BINARY_KEYS, ContinuousScenario
    else:
        raise ConfigError(f"[scenario] type: must be 'binary' or 'continuous', got {kind!r}")
    if foreign:
        raise ConfigError(f"[scenario] {sorted(foreign)[0]}: not valid for a {kind} scenario")
    for key in sc:
        _validate_field(key, sc[key])
    try:
        cfg.scenario = cls(gamma=gamma, **sc)
    except ValueError as exc:
        raise ConfigError(f"[scenario] {exc}") from None

    s = v.get("sqh", {})
    try:
        inner = InnerSearchConfig(
            s.get("w0", 10.0), s.get("inner_tol", 1e-8), s.get("max_retries", 100)
        )
        cfg.sqh = SqhConfig(
            epsilon0=s.get("epsilon", 1000.0),
            lam=s.get("lambda", 1000.0),
            zeta=s.get("zeta", 0.5),
            rho=s.get("rho", 1000.0),
            kappa=s.get("kappa", 1e-3),
            max_iter=s.get("max_iter", 1000),
            inner=inner,
            gauss_seidel=s.get("gauss_seidel", False),
        )
    except ValueError as exc:
        raise ConfigError(f"[sqh] {exc}") from None

    f = v.get("fit", {})
    cfg.alpha_grid_points = f.get("alpha_grid_points", cfg.alpha_grid_points)
    if cfg.alpha_grid_points < 1:
        raise ConfigError("[fit] alpha_grid_points: must be at least 1")
    cfg.group_values = _floats("fit", "group_values", f.get("group_values", []))
    if "extreme_groups" in f:
        eg = _floats("fit", "extreme_groups", f["extreme_groups"])
        if len(eg) != 2:
            raise ConfigError("[fit] extreme_groups: needs exactly two values")
        cfg.extreme_groups = (eg[0], eg[1])

    mc = v.get("mc", {})
    cfg.replications = mc.get("replications", cfg.replications)
    if cfg.replications < 1:
        raise ConfigError("[mc] replications: must be at least 1")
    cfg.init = mc.get("init", cfg.init)
    if cfg.init not in INIT_STRATEGIES:
        raise ConfigError(f"[mc] init: must be one of {', '.join(INIT_STRATEGIES)}")
    cfg.spread = mc.get("spread", cfg.spread)
    if "report_targets" in mc:
        targets = []
        for item in mc["report_targets"]:
            parts = item.split(":")
            if len(parts) != 2:
                raise ConfigError("[mc] report_targets: use y:x pairs separated by commas")
            targets.append(tuple(_floats("mc", "report_targets", parts)))
        cfg.report_targets = targets
    for name in ("zeta", "lambda", "rho", "epsilon"):
        key = f"sweep_{name}"
        if key in mc:
            cfg.sweeps[name] = _floats("mc", key, mc[key])

    cfg.resamples = v.get("bootstrap", {}).get("resamples", cfg.resamples)
    if cfg.resamples < 2:
        raise ConfigError("[bootstrap] resamples: must be at least 2")
    cfg.n_sets = v.get("residuals", {}).get("n_sets", cfg.n_sets)
    if cfg.n_sets < 1:
        raise ConfigError("[residuals] n_sets: must be at least 1")
    return cfg


def _validate_field(key, value):
    probs = {"p01", "p00", "p_high", "p_low"}
    if key in probs and not 0 < value < 1:
        raise ConfigError(f"[scenario] {key}: must lie strictly between 0 and 1, got {value}")
    if key == "alpha" and not 0 <= value <= 1:
        raise ConfigError(f"[scenario] alpha: must lie in [0, 1], got {value}")
    if key in ("n", "n1", "n2") and value < 1:
        raise ConfigError(f"[scenario] {key}: must be at least 1")


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
