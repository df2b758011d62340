"""CSV and key-value file formats."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .lifetime import WeibullParams
from .model import Dataset, ParameterVector

__all__ = [
    "DataError",
    "dataset_to_csv",
    "write_dataset",
    "read_dataset",
    "parse_dataset",
    "theta_to_text",
    "read_theta",
    "two_column_csv",
]


class DataError(ValueError):
    """Malformed input data, reported with file and line context."""


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y", "delta", *data.covariate_names])
    for yi, di, xi in zip(data.y, data.delta, data.x):
        w.writerow([repr(float(yi)), int(di), *(repr(float(v)) for v in xi)])
    return buf.getvalue()


def write_dataset(data: Dataset, path) -> Path:
    path = Path(path)
    try:
        path.write_text(dataset_to_csv(data))
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc.strerror}") from exc
    return path


def parse_dataset(text: str, source: str = "<string>") -> Dataset:
    """Parse ``y,delta,x1[,x2,...]`` CSV text; the header is required."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{source}: file is empty")
    lineno, header = rows[0]
    header = [h.strip() for h in header]
    if header[:2] != ["y", "delta"]:
        raise DataError(f"{source}:{lineno}: header must start with 'y,delta', got {header[:2]}")
    width = len(header)
    y, delta, x = [], [], []
    for lineno, row in rows[1:]:
        if len(row) != width:
            raise DataError(f"{source}:{lineno}: expected {width} fields, found {len(row)}")
        try:
            yi = float(row[0])
            xi = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: {exc}") from None
        d = row[1].strip()
        if d not in ("0", "1"):
            raise DataError(f"{source}:{lineno}: delta must be 0 or 1, got {d!r}")
        if not (yi >= 0 and np.isfinite(yi)):
            raise DataError(f"{source}:{lineno}: y must be a finite nonnegative number")
        if not all(np.isfinite(xi)):
            raise DataError(f"{source}:{lineno}: covariates must be finite")
        y.append(yi)
        delta.append(int(d))
        x.append(xi)
    if not y:
        raise DataError(f"{source}: no data rows")
    return Dataset(y, delta, np.array(x, dtype=float).reshape(len(y), width - 2), tuple(header[2:]))


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_dataset(text, str(path))


def theta_to_text(theta: ParameterVector) -> str:
    return "".join(f"{n} = {float(v)!r}\n" for n, v in zip(theta.names(), theta.to_array()))


def read_theta(path) -> ParameterVector:
    """Read ``name = value`` lines (as written by ``fit``); other keys are ignored."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line or "=" not in line:
            continue
        key, _, val = (s.strip() for s in line.partition("="))
        if key.startswith("beta") or key in ("gamma1", "gamma2", "alpha"):
            try:
                values[key] = float(val)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad number {val!r}") from None
    betas = []
    while f"beta{len(betas)}" in values:
        betas.append(values[f"beta{len(betas)}"])
    missing = [k for k in ("gamma1", "gamma2", "alpha") if k not in values]
    if not betas or missing:
        raise DataError(f"{path}: parameter file lacks {missing or ['beta0']}")
    try:
        return ParameterVector(betas, WeibullParams(values["gamma1"], values["gamma2"]), values["alpha"])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def two_column_csv(names: tuple[str, str], a, b) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for u, v in zip(a, b):
        w.writerow([repr(float(u)), repr(float(v))])
    return buf.getvalue()
