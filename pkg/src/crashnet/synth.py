"""Seeded regime-switching price panels for end-to-end tests.

Each segment draws returns from a one-factor equicorrelation model::

    r_i(t) = drift + vol * (sqrt(rho) * f(t) + sqrt(1 - rho) * e_i(t))

The crash segment's drift is solved per asset so that every asset closes
the segment at exactly ``1 - drawdown`` times its opening close.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .errors import DataError
from .ingest import DateWindow, PricePanel


@dataclass(frozen=True)
class RegimeSpec:
    n_assets: int = 40
    pre_days: int = 200
    crash_days: int = 70
    post_days: int = 150
    rho_pre: float = 0.15
    rho_crash: float = 0.8
    rho_post: float = 0.25
    # a steady rally before and a recovery after pin the peak and trough
    drift_pre: float = 0.002
    drift_post: float = 0.002
    volatility: float = 0.005
    # crash returns are this many times more volatile
    crash_vol_scale: float = 3.0
    drawdown: float = 0.4
    seed: int = 0
    start: date = date(2020, 1, 1)

    def __post_init__(self):
        if self.n_assets < 2:
            raise DataError("n_assets must be >= 2")
        for name in ("pre_days", "crash_days", "post_days"):
            if getattr(self, name) < 10:
                raise DataError(f"{name} must be >= 10")
        for name in ("rho_pre", "rho_crash", "rho_post"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise DataError(f"{name} must lie in [0, 1)")
        if not 0.0 < self.drawdown < 1.0:
            raise DataError("drawdown must lie in (0, 1)")
        if not (self.volatility > 0 and self.crash_vol_scale > 0):
            raise DataError("volatility and crash_vol_scale must be positive")

    @property
    def n_days(self) -> int:
        return self.pre_days + self.crash_days + self.post_days

    def segment_windows(self) -> dict[str, DateWindow]:
        """Calendar windows of the three segments (by price date)."""
        d = lambda i: self.start + timedelta(days=i)  # noqa: E731
        a, b = self.pre_days, self.pre_days + self.crash_days
        return {
            "pre": DateWindow(d(0), d(a - 1)),
            "crash": DateWindow(d(a), d(b - 1)),
            "post": DateWindow(d(b), d(self.n_days - 1)),
        }


def _equicorrelated(rng_factor, rngs_idio, n: int, rho: float) -> np.ndarray:
    f = rng_factor.standard_normal(n)
    eps = np.column_stack([g.standard_normal(n) for g in rngs_idio])
    return np.sqrt(rho) * f[:, None] + np.sqrt(1.0 - rho) * eps


def generate_panel(spec: RegimeSpec) -> PricePanel:
    """Closes start at 100; day ``k``'s close includes returns of days
    ``1..k``, and the return into day ``k`` belongs to the segment of day
    ``k``. The crash segment spans price days ``pre_days - 1`` (its opening
    close) to ``pre_days + crash_days - 1``."""
    n = spec.n_assets
    seqs = np.random.SeedSequence(spec.seed).spawn(n + 1)
    factor = np.random.Generator(np.random.PCG64(seqs[0]))
    idio = [np.random.Generator(np.random.PCG64(s)) for s in seqs[1:]]

    pre_n = spec.pre_days - 1  # day 0 has no incoming return
    segments = [
        (pre_n, spec.rho_pre, spec.drift_pre, 1.0),
        (spec.crash_days, spec.rho_crash, None, spec.crash_vol_scale),
        (spec.post_days, spec.rho_post, spec.drift_post, 1.0),
    ]
    blocks = []
    for length, rho, drift, scale in segments:
        noise = spec.volatility * scale * _equicorrelated(factor, idio, length, rho)
        if drift is None:
            target = np.log1p(-spec.drawdown)
            drift = (target - noise.sum(axis=0)) / length
        blocks.append(noise + drift)
    log_r = np.vstack(blocks)
    log_p = np.vstack([np.zeros((1, n)), np.cumsum(log_r, axis=0)])
    prices = 100.0 * np.exp(log_p)
    dates = [spec.start + timedelta(days=i) for i in range(spec.n_days)]
    width = len(str(n))
    symbols = [f"A{j:0{width}d}" for j in range(n)]
    return PricePanel(dates, symbols, prices)
