"""Empirical mode decomposition by cubic-spline sifting."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DataError, NotEnoughExtrema

log = logging.getLogger(__name__)

# extrema mirrored past each boundary before fitting envelopes
N_MIRROR = 2


@dataclass(frozen=True)
class SiftConfig:
    sd_threshold: float = 0.2
    max_sift_iters: int = 100
    max_imfs: int = 12
    envelope_tol: float = 1e-2

    def __post_init__(self):
        for name in ("sd_threshold", "max_sift_iters", "max_imfs", "envelope_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SiftConfig.{name} must be positive")


@dataclass
class Imf:
    values: np.ndarray
    sift_count: int

    def __len__(self):
        return self.values.shape[0]


@dataclass
class ImfSet:
    imfs: list
    residual: np.ndarray
    source_len: int = field(default=0)

    def __post_init__(self):
        if not self.source_len:
            self.source_len = self.residual.shape[0]

    def __len__(self):
        return len(self.imfs)

    def matrix(self) -> np.ndarray:
        """IMFs stacked as rows, shape (k, T)."""
        if not self.imfs:
            return np.empty((0, self.source_len))
        return np.vstack([imf.values for imf in self.imfs])

    def reconstruct(self) -> np.ndarray:
        total = np.zeros(self.source_len)
        for imf in self.imfs:
            total = total + imf.values
        return total + self.residual


def find_extrema(x) -> tuple[np.ndarray, np.ndarray]:
    """Indices of strict interior local maxima and minima.

    A flat plateau bounded by lower (higher) neighbours on both sides counts
    as one maximum (minimum) located at its midpoint, rounded down.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 3:
        raise DataError("find_extrema needs a 1-D series of length >= 3")
    change = np.flatnonzero(np.diff(x) != 0)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [x.shape[0] - 1]))
    v = x[starts]
    if v.shape[0] < 3:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty
    mid = v[1:-1]
    is_max = (mid > v[:-2]) & (mid > v[2:])
    is_min = (mid < v[:-2]) & (mid < v[2:])
    centre = (starts[1:-1] + ends[1:-1]) // 2
    return centre[is_max].astype(np.intp), centre[is_min].astype(np.intp)


def count_zero_crossings(x) -> int:
    s = np.sign(np.asarray(x, dtype=np.float64))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def mean_period(x) -> float:
    """Average oscillation period in samples, ``2 T / #extrema`` (inf when
    the series has no interior extremum)."""
    maxima, minima = find_extrema(x)
    n_ext = maxima.size + minima.size
    return math.inf if n_ext == 0 else 2.0 * len(x) / n_ext


def _mirror_side(x, maxima, minima, left: bool):
    """Mirrored knot positions and values for one boundary.

    Reflects the ``N_MIRROR`` extrema nearest the edge about either the
    outermost extremum or, when the end sample overshoots it, the end sample
    itself (which then joins the envelope as a knot).
    """
    n = x.shape[0]
    if not left:
        # reflect the problem so the same code handles the right edge
        rx = x[::-1]
        rmax = (n - 1 - maxima)[::-1]
        rmin = (n - 1 - minima)[::-1]
        (tmax, vmax), (tmin, vmin) = _mirror_side(rx, rmax, rmin, left=True)
        return (n - 1 - tmax, vmax), (n - 1 - tmin, vmin)

    k = N_MIRROR
    if maxima[0] < minima[0]:
        if x[0] > x[minima[0]]:
            lmax, lmin, sym = maxima[1:k + 1], minima[:k], maxima[0]
        else:
            lmax, lmin, sym = maxima[:k], np.append(minima[:k - 1], 0), 0
    else:
        if x[0] < x[maxima[0]]:
            lmax, lmin, sym = maxima[:k], minima[1:k + 1], minima[0]
        else:
            lmax, lmin, sym = np.append(maxima[:k - 1], 0), minima[:k], 0

    tmax, tmin = 2 * sym - lmax, 2 * sym - lmin
    if sym != 0 and (tmax.size == 0 or tmin.size == 0 or tmax.max() >= 0 or tmin.max() >= 0):
        # reflection about an inner extremum would land inside the series
        lmax, lmin = maxima[:k], minima[:k]
        tmax, tmin = -lmax, -lmin
    return (tmax, x[lmax]), (tmin, x[lmin])


def _envelope(t_knots, v_knots, t_eval):
    order = np.argsort(t_knots, kind="stable")
    t, v = t_knots[order], v_knots[order]
    keep = np.concatenate(([True], np.diff(t) > 0))
    t, v = t[keep], v[keep]
    if t.shape[0] < 2:
        raise NotEnoughExtrema("envelope has fewer than 2 knots")
    if t.shape[0] == 2:
        slope = (v[1] - v[0]) / (t[1] - t[0])
        return v[0] + slope * (t_eval - t[0])
    return CubicSpline(t, v, bc_type="natural")(t_eval)


def envelope_mean(x, maxima=None, minima=None) -> np.ndarray:
    """Pointwise mean of the upper and lower spline envelopes of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if maxima is None or minima is None:
        maxima, minima = find_extrema(x)
    maxima = np.asarray(maxima, dtype=np.intp)
    minima = np.asarray(minima, dtype=np.intp)
    if maxima.size == 0 or minima.size == 0:
        raise NotEnoughExtrema(f"{maxima.size} maxima and {minima.size} minima")

    (lt_max, lv_max), (lt_min, lv_min) = _mirror_side(x, maxima, minima, left=True)
    (rt_max, rv_max), (rt_min, rv_min) = _mirror_side(x, maxima, minima, left=False)
    t_max = np.concatenate((lt_max, maxima, rt_max)).astype(np.float64)
    v_max = np.concatenate((lv_max, x[maxima], rv_max))
    t_min = np.concatenate((lt_min, minima, rt_min)).astype(np.float64)
    v_min = np.concatenate((lv_min, x[minima], rv_min))

    t = np.arange(x.shape[0], dtype=np.float64)
    upper = _envelope(t_max, v_max, t)
    lower = _envelope(t_min, v_min, t)
    return 0.5 * (upper + lower)


def is_imf(h, mean=None, envelope_tol: float = 1e-2) -> bool:
    maxima, minima = find_extrema(h)
    n_ext = maxima.size + minima.size
    if abs(n_ext - count_zero_crossings(h)) > 1:
        return False
    if mean is None:
        return True
    scale = np.max(np.abs(h))
    return bool(np.max(np.abs(mean)) <= envelope_tol * scale)


def sift(x, cfg: SiftConfig | None = None) -> Imf:
    """Extract one IMF from ``x``.

    Stops once the extrema/zero-crossing counts agree within one and either
    the Cauchy SD between successive iterates falls below
    ``cfg.sd_threshold`` or the envelope mean is within ``cfg.envelope_tol``
    of zero. Raises :class:`NotEnoughExtrema` if ``x`` itself cannot be
    enveloped.
    """
    cfg = cfg or SiftConfig()
    h = np.array(x, dtype=np.float64)
    for k in range(1, cfg.max_sift_iters + 1):
        try:
            m = envelope_mean(h)
        except NotEnoughExtrema:
            if k == 1:
                raise
            return Imf(h, k - 1)
        if k > 1 and is_imf(h, m, cfg.envelope_tol):
            return Imf(h, k - 1)
        h_next = h - m
        denom = np.dot(h, h)
        sd = np.dot(m, m) / denom if denom > 0 else 0.0
        h = h_next
        if sd < cfg.sd_threshold and is_imf(h):
            return Imf(h, k)
    log.debug("sift hit max_sift_iters=%d", cfg.max_sift_iters)
    return Imf(h, cfg.max_sift_iters)


def decompose(x, cfg: SiftConfig | None = None) -> ImfSet:
    """Split ``x`` into IMFs (fastest first) plus a residual with fewer than
    two interior extrema, or stop at ``cfg.max_imfs``."""
    cfg = cfg or SiftConfig()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 8:
        raise DataError("decompose needs a 1-D series of length >= 8")
    if not np.isfinite(x).all():
        raise DataError("decompose input contains NaN or Inf")

    residual = x.copy()
    imfs: list[Imf] = []
    while len(imfs) < cfg.max_imfs:
        maxima, minima = find_extrema(residual)
        if maxima.size + minima.size < 2:
            break
        try:
            imf = sift(residual, cfg)
        except NotEnoughExtrema:
            break
        imfs.append(imf)
        residual = residual - imf.values
    return ImfSet(imfs, residual, x.shape[0])


def write_imf_csv(imfs: ImfSet, path, index=None) -> Path:
    """IMF dump with columns ``t, imf_1..imf_k, residual``."""
    path = Path(path)
    index = range(imfs.source_len) if index is None else index
    cols = [imf.values for imf in imfs.imfs] + [imfs.residual]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *(f"imf_{i + 1}" for i in range(len(imfs.imfs))), "residual"])
        for i, t in enumerate(index):
            label = t.isoformat() if hasattr(t, "isoformat") else t
            w.writerow([label, *(repr(float(c[i])) for c in cols)])
    return path


def read_imf_csv(path) -> tuple[list, ImfSet]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[0] != "t" or header[-1] != "residual":
        raise DataError(f"{path}: not an IMF dump (header {header})")
    index = [r[0] for r in body]
    data = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), len(header) - 1)
    imfs = [Imf(data[:, j].copy(), 0) for j in range(data.shape[1] - 1)]
    return index, ImfSet(imfs, data[:, -1].copy(), len(body))
