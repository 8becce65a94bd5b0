"""Returns, Pearson and partial correlation matrices."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, SingularCorrelation
from .ingest import PricePanel

log = logging.getLogger(__name__)

# condition number above which the ridge is escalated
MAX_CONDITION = 1e10
ESCALATED_LAMBDA = 1e-3


@dataclass
class ReturnMatrix:
    dates: tuple
    symbols: tuple
    values: np.ndarray


@dataclass
class CorrelationMatrix:
    symbols: tuple
    values: np.ndarray


@dataclass
class PartialCorrelationMatrix:
    symbols: tuple
    values: np.ndarray
    shrinkage_lambda: float = 0.0


def daily_returns(panel: PricePanel, kind: str = "log") -> ReturnMatrix:
    p = panel.values
    if p.shape[0] < 3:
        raise DataError("need at least 3 dates to compute returns")
    if (p <= 0).any():
        raise DataError("non-positive price in panel")
    if kind == "log":
        r = np.diff(np.log(p), axis=0)
    elif kind == "simple":
        r = p[1:] / p[:-1] - 1.0
    else:
        raise DataError(f"unknown return kind {kind!r}")
    if r.shape[0] < r.shape[1]:
        log.warning("only %d return rows for %d assets; correlation matrix is rank deficient",
                    r.shape[0], r.shape[1])
    return ReturnMatrix(panel.dates[1:], panel.symbols, r)


def pearson_matrix(returns: ReturnMatrix) -> CorrelationMatrix:
    """Pearson correlations with 1/n normalisation of mean and std."""
    r = np.asarray(returns.values, dtype=np.float64)
    n = r.shape[0]
    if n < 3:
        raise DataError(f"need at least 3 returns, got {n}")
    if not np.isfinite(r).all():
        raise DataError("returns contain NaN or Inf")
    centred = r - r.mean(axis=0)
    std = np.sqrt((centred * centred).sum(axis=0) / n)
    flat = std == 0
    if flat.any():
        names = [returns.symbols[j] for j in np.flatnonzero(flat)]
        raise DataError(f"zero-variance returns for {', '.join(names)}")
    z = centred / std
    c = (z.T @ z) / n
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    np.clip(c, -1.0, 1.0, out=c)
    return CorrelationMatrix(tuple(returns.symbols), c)


def _invert(m: np.ndarray) -> np.ndarray | None:
    if not np.isfinite(m).all():
        return None
    if np.linalg.cond(m) > MAX_CONDITION:
        return None
    return np.linalg.inv(m)


def partial_corr_matrix(corr: CorrelationMatrix, lam: float = 1e-6) -> PartialCorrelationMatrix:
    """Partial correlations from the inverse of ``(1 - lam) C + lam I``.

    If the shrunk matrix is still ill-conditioned the ridge is raised to
    ``ESCALATED_LAMBDA`` with a warning.
    """
    if not 0.0 <= lam <= 0.1:
        raise DataError(f"shrinkage lambda {lam} outside [0, 0.1]")
    c = np.asarray(corr.values, dtype=np.float64)
    eye = np.eye(c.shape[0])
    inv = _invert((1.0 - lam) * c + lam * eye)
    if inv is None and lam < ESCALATED_LAMBDA:
        warnings.warn(
            f"correlation matrix ill-conditioned at lambda={lam:g}; escalating to {ESCALATED_LAMBDA:g}",
            RuntimeWarning,
            stacklevel=2,
        )
        lam = ESCALATED_LAMBDA
        inv = _invert((1.0 - lam) * c + lam * eye)
    if inv is None:
        raise SingularCorrelation(f"correlation matrix singular even with lambda={lam:g}")

    d = np.sqrt(np.diag(inv))
    if not (d > 0).all():
        raise SingularCorrelation("non-positive diagonal in inverse correlation matrix")
    pc = -inv / np.outer(d, d)
    pc = 0.5 * (pc + pc.T)
    np.fill_diagonal(pc, 1.0)
    worst = np.abs(pc).max()
    if worst > 1.0 + 1e-10:
        raise SingularCorrelation(f"partial correlation magnitude {worst} exceeds 1")
    np.clip(pc, -1.0, 1.0, out=pc)
    return PartialCorrelationMatrix(tuple(corr.symbols), pc, lam)


def offdiagonal(m) -> np.ndarray:
    values = np.asarray(getattr(m, "values", m))
    iu = np.triu_indices(values.shape[0], k=1)
    return values[iu]


def mean_offdiagonal(m) -> float:
    vals = offdiagonal(m)
    if vals.size == 0:
        raise DataError("mean_offdiagonal needs at least 2 assets")
    return float(vals.mean())


def write_matrix_csv(m, path, full_precision: bool = True) -> Path:
    """Symbol-labelled square matrix (heatmap export)."""
    path = Path(path)
    fmt = repr if full_precision else (lambda v: format(v, ".6g"))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["", *m.symbols])
        for sym, row in zip(m.symbols, m.values):
            w.writerow([sym, *(fmt(float(v)) for v in row)])
    return path


def read_matrix_csv(path, lam: float = float("nan")) -> PartialCorrelationMatrix:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    symbols = tuple(rows[0][1:])
    if tuple(r[0] for r in rows[1:]) != symbols:
        raise DataError(f"{path}: row labels do not match column labels")
    try:
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if values.shape != (len(symbols), len(symbols)):
        raise DataError(f"{path}: matrix is not square")
    return PartialCorrelationMatrix(symbols, values, lam)
