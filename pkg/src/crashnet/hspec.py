"""Hilbert spectral analysis of IMFs and energy-based crash detection."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .emd import ImfSet, SiftConfig, decompose, mean_period
from .errors import ConfigError, DataError, NoCrashDetected, NotACrash
from .ingest import DateWindow, PriceSeries

# amplitude below this fraction of the peak amplitude has no usable phase
AMPLITUDE_FLOOR = 1e-8


@dataclass
class AnalyticSeries:
    amplitude: np.ndarray
    phase: np.ndarray
    frequency: np.ndarray


@dataclass
class HilbertSpectrum:
    """Binned time-frequency energy.

    ``contributions[t, i]`` is the squared amplitude of IMF ``i`` at ``t``
    and ``bin_index[t, i]`` the frequency bin it was assigned to.
    """

    time_axis: list
    freq_edges: np.ndarray
    power: np.ndarray
    contributions: np.ndarray
    bin_index: np.ndarray

    @property
    def bin_centres(self) -> np.ndarray:
        return 0.5 * (self.freq_edges[:-1] + self.freq_edges[1:])


@dataclass
class EnergySeries:
    dates: list
    energy: np.ndarray

    def __len__(self):
        return self.energy.shape[0]


@dataclass(frozen=True)
class CrashConfig:
    spike_k: float = 4.0
    lookback: int = 60
    lookahead: int = 60
    # fraction of samples at each end ignored when looking for the trigger
    edge_guard: float = 0.0
    # trailing moving average applied to the energy before thresholding
    smooth_days: int = 1

    def __post_init__(self):
        if not self.spike_k > 0:
            raise ConfigError(f"spike_k must be positive, got {self.spike_k}")
        if self.lookback < 0 or self.lookahead < 1:
            raise ConfigError("lookback must be >= 0 and lookahead >= 1")
        if not 0.0 <= self.edge_guard < 0.5:
            raise ConfigError(f"edge_guard {self.edge_guard} outside [0, 0.5)")
        if self.smooth_days < 1:
            raise ConfigError("smooth_days must be >= 1")


@dataclass
class CrashWindow:
    peak_date: date
    trough_date: date
    trigger_date: date
    threshold: float = float("nan")
    peak_close: float = float("nan")
    trough_close: float = float("nan")

    def __post_init__(self):
        if not self.peak_date < self.trough_date:
            raise NotACrash(f"peak {self.peak_date} is not before trough {self.trough_date}")
        if not self.peak_date <= self.trigger_date <= self.trough_date:
            raise NotACrash(f"trigger {self.trigger_date} outside [{self.peak_date}, {self.trough_date}]")

    @property
    def window(self) -> DateWindow:
        return DateWindow(self.peak_date, self.trough_date)

    @property
    def drawdown(self) -> float:
        return 1.0 - self.trough_close / self.peak_close


@dataclass
class PeriodPartition:
    pre: DateWindow
    crash: DateWindow
    post: DateWindow

    def __post_init__(self):
        one = timedelta(days=1)
        if self.pre.end + one != self.crash.start or self.crash.end + one != self.post.start:
            raise DataError(
                f"periods must be contiguous: pre {self.pre}, crash {self.crash}, post {self.post}"
            )

    def items(self):
        return [("pre", self.pre), ("crash", self.crash), ("post", self.post)]

    def to_dict(self) -> dict:
        return {k: {"start": w.start.isoformat(), "end": w.end.isoformat()} for k, w in self.items()}


def analytic_signal(imf) -> AnalyticSeries:
    """Instantaneous amplitude, unwrapped phase and frequency (rad/sample)
    from the FFT-built analytic signal of ``imf``."""
    x = np.asarray(imf, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 8:
        raise DataError("analytic_signal needs a 1-D series of length >= 8")
    if not np.isfinite(x).all():
        raise DataError("analytic_signal input contains NaN or Inf")
    n = x.shape[0]
    spectrum = np.fft.fft(x)
    gain = np.zeros(n)
    gain[0] = 1.0
    if n % 2 == 0:
        gain[n // 2] = 1.0
        gain[1:n // 2] = 2.0
    else:
        gain[1:(n + 1) // 2] = 2.0
    z = np.fft.ifft(spectrum * gain)

    amplitude = np.abs(z)
    phase = np.unwrap(np.angle(z))
    frequency = np.gradient(phase)
    peak = amplitude.max()
    if peak == 0:
        frequency[:] = 0.0
    else:
        frequency[amplitude < AMPLITUDE_FLOOR * peak] = 0.0
    return AnalyticSeries(amplitude, phase, frequency)


def _quantum(row_totals: np.ndarray) -> float:
    """Power-of-two grid on which every partial sum of a row is exact."""
    top = float(row_totals.max()) if row_totals.size else 0.0
    if top <= 0 or not math.isfinite(top):
        return 0.0
    return math.ldexp(1.0, math.frexp(top)[1] + 1 - 52)


def hilbert_spectrum(
    imfs: ImfSet | Sequence[np.ndarray],
    bins: int = 64,
    freq_max: float = math.pi,
    time_axis: Sequence | None = None,
) -> HilbertSpectrum:
    """Accumulate each IMF's squared amplitude into the frequency bin that
    holds its instantaneous frequency.

    Energies are snapped to a shared power-of-two grid so the bin sums
    equal the per-IMF sums exactly, in any summation order.
    """
    rows = imfs.matrix() if isinstance(imfs, ImfSet) else np.atleast_2d(np.asarray(imfs, dtype=np.float64))
    if rows.shape[0] == 0:
        raise DataError("hilbert_spectrum needs at least one IMF")
    if bins < 2:
        raise DataError("hilbert_spectrum needs at least 2 bins")
    k, n = rows.shape
    amp = np.empty((n, k))
    freq = np.empty((n, k))
    for i in range(k):  # fixed IMF order for determinism
        a = analytic_signal(rows[i])
        amp[:, i] = a.amplitude
        freq[:, i] = a.frequency

    raw = amp * amp
    q = _quantum(raw.sum(axis=1))
    contributions = np.round(raw / q) * q if q > 0 else np.zeros_like(raw)

    edges = np.linspace(0.0, freq_max, bins + 1)
    idx = np.clip(np.searchsorted(edges, freq, side="right") - 1, 0, bins - 1)
    power = np.zeros((n, bins))
    t_idx = np.arange(n)
    for i in range(k):
        np.add.at(power, (t_idx, idx[:, i]), contributions[:, i])

    axis = list(time_axis) if time_axis is not None else list(range(n))
    if len(axis) != n:
        raise DataError(f"time axis has {len(axis)} entries for {n} samples")
    return HilbertSpectrum(axis, edges, power, contributions, idx)


def instantaneous_energy(spec: HilbertSpectrum) -> EnergySeries:
    return EnergySeries(list(spec.time_axis), spec.power.sum(axis=1))


def smooth_energy(energy: EnergySeries, days: int) -> EnergySeries:
    """Trailing ``days``-sample moving average; the first sample is repeated
    to fill the warm-up."""
    if days <= 1:
        return energy
    e = np.asarray(energy.energy, dtype=np.float64)
    padded = np.concatenate((np.full(days - 1, e[0]), e))
    kernel = np.full(days, 1.0 / days)
    return EnergySeries(list(energy.dates), np.convolve(padded, kernel, mode="valid"))


def _mad(x: np.ndarray) -> tuple[float, float]:
    med = float(np.median(x))
    return med, float(np.median(np.abs(x - med)))


def detect_crash(
    energy: EnergySeries, prices: PriceSeries, cfg: CrashConfig | None = None
) -> CrashWindow:
    """Locate the first energy spike and widen it to the surrounding
    peak-to-trough move in ``prices``.

    The trigger is the first date whose (optionally smoothed) energy
    exceeds ``median + spike_k * MAD``. The peak is the highest close within
    ``lookback`` days before it, the trough the lowest close within
    ``lookahead`` days after it.
    """
    cfg = cfg or CrashConfig()
    dates = list(prices.dates)
    if list(energy.dates) != dates:
        raise DataError("energy and price series do not share a date axis")
    e = np.asarray(smooth_energy(energy, cfg.smooth_days).energy, dtype=np.float64)
    med, mad = _mad(e)
    threshold = med + cfg.spike_k * mad
    n = e.shape[0]
    guard = int(math.floor(cfg.edge_guard * n))
    above = np.flatnonzero(e[guard:n - guard] > threshold) + guard
    if mad == 0 or above.size == 0:
        raise NoCrashDetected(f"no energy above median + {cfg.spike_k}*MAD = {threshold:.6g}")
    trig = int(above[0])
    trigger = dates[trig]

    closes = prices.closes
    lo_date = trigger - timedelta(days=cfg.lookback)
    hi_date = trigger + timedelta(days=cfg.lookahead)
    before = [i for i in range(trig + 1) if dates[i] >= lo_date]
    after = [i for i in range(trig, n) if dates[i] <= hi_date]
    peak = before[int(np.argmax(closes[before]))]
    trough = after[int(np.argmin(closes[after]))]
    if trough <= peak or closes[trough] >= closes[peak]:
        raise NotACrash(f"no fall around trigger {trigger}: peak {dates[peak]}, trough {dates[trough]}")
    return CrashWindow(
        dates[peak], dates[trough], trigger, threshold, float(closes[peak]), float(closes[trough])
    )


def detection_energy(
    prices: PriceSeries,
    sift: SiftConfig | None = None,
    bins: int = 64,
    exclude_slowest: int = 0,
    max_period: float | None = None,
) -> tuple[EnergySeries, ImfSet]:
    """Energy of the log-price IMFs.

    The residual is always excluded. ``exclude_slowest`` also drops that many
    lowest-frequency IMFs, and ``max_period`` drops IMFs whose mean period
    (samples) exceeds it. The fastest IMF is always kept.
    """
    imfs = decompose(np.log(prices.closes), sift)
    if len(imfs) == 0:
        raise NoCrashDetected(f"{prices.symbol}: log price has no oscillatory component")
    keep = imfs.matrix()
    if exclude_slowest:
        keep = keep[: max(1, keep.shape[0] - exclude_slowest)]
    if max_period is not None:
        fast = [i for i, row in enumerate(keep) if mean_period(row) <= max_period]
        keep = keep[fast or [0]]
    spec = hilbert_spectrum(keep, bins, time_axis=prices.dates)
    return instantaneous_energy(spec), imfs


def partition_periods(crash: CrashWindow, span_days: int = 105) -> PeriodPartition:
    if span_days < 1:
        raise DataError("span_days must be >= 1")
    one = timedelta(days=1)
    span = timedelta(days=span_days)
    return PeriodPartition(
        pre=DateWindow(crash.peak_date - span, crash.peak_date - one),
        crash=DateWindow(crash.peak_date, crash.trough_date),
        post=DateWindow(crash.trough_date + one, crash.trough_date + span),
    )


def partition_from_windows(pre: DateWindow, crash: DateWindow, post: DateWindow) -> PeriodPartition:
    """Explicit partition from user-supplied dates."""
    return PeriodPartition(pre, crash, post)


def write_spectrum_csv(spec: HilbertSpectrum, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *(repr(float(c)) for c in spec.bin_centres)])
        for t, row in zip(spec.time_axis, spec.power):
            label = t.isoformat() if hasattr(t, "isoformat") else t
            w.writerow([label, *(repr(float(v)) for v in row)])
    return path


def write_energy_csv(energy: EnergySeries, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "energy"])
        for t, v in zip(energy.dates, energy.energy):
            label = t.isoformat() if hasattr(t, "isoformat") else t
            w.writerow([label, repr(float(v))])
    return path


def read_energy_csv(path) -> EnergySeries:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows[0] != ["date", "energy"]:
        raise DataError(f"{path}: not an energy export")
    dates = [_parse_label(r[0]) for r in rows[1:]]
    try:
        values = np.array([float(r[1]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from None
    return EnergySeries(dates, values)


def _parse_label(text: str):
    # dates when the export came from a price series, sample labels otherwise
    try:
        return date.fromisoformat(text)
    except ValueError:
        return text


def crash_report(crash: CrashWindow, partition: PeriodPartition, symbol: str | None = None) -> dict:
    return {
        "symbol": symbol,
        "peak_date": crash.peak_date.isoformat(),
        "trigger_date": crash.trigger_date.isoformat(),
        "trough_date": crash.trough_date.isoformat(),
        "energy_threshold": crash.threshold,
        "drawdown": crash.drawdown,
        "periods": partition.to_dict(),
    }


def write_crash_json(report: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_crash_json(path) -> tuple[CrashWindow, PeriodPartition]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    periods = {
        k: DateWindow(date.fromisoformat(v["start"]), date.fromisoformat(v["end"]))
        for k, v in data["periods"].items()
    }
    crash = CrashWindow(
        date.fromisoformat(data["peak_date"]),
        date.fromisoformat(data["trough_date"]),
        date.fromisoformat(data["trigger_date"]),
        data.get("energy_threshold", float("nan")),
    )
    return crash, PeriodPartition(periods["pre"], periods["crash"], periods["post"])
