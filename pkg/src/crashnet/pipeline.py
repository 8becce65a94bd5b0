"""End-to-end run: ingest, detect, partition, correlate, network, metrics."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from datetime import timedelta
from pathlib import Path

import numpy as np

from .costats import daily_returns, mean_offdiagonal, partial_corr_matrix, pearson_matrix, write_matrix_csv
from .emd import SiftConfig
from .errors import ConfigError, CrashnetError, DataError, NumericalError
from .hspec import (
    CrashConfig,
    PeriodPartition,
    crash_report,
    detect_crash,
    detection_energy,
    partition_periods,
    write_crash_json,
    write_energy_csv,
)
from .ingest import AlignmentReport, DateWindow, MissingPolicy, PricePanel, PriceSeries, align_panel, load_many, slice_period
from .netbuild import build_network, percentile_threshold, write_dot, write_graphml
from .netmetrics import MetricsReport, metrics_report, report_to_json

log = logging.getLogger(__name__)

PERIODS = ("pre", "crash", "post")
TABLE_METRICS = ("degree_density", "avg_clustering", "avg_path_length", "mean_partial_correlation")
INDEX_SYMBOL = "INDEX"


@dataclass
class RunConfig:
    inputs: list = field(default_factory=list)
    out_dir: str = "crashnet_out"
    layout: str = "auto"
    study_window: DateWindow | None = None
    missing: MissingPolicy = field(default_factory=MissingPolicy)
    # None: auto-detect exactly when no explicit crash windows are given
    auto_detect: bool | None = None
    # crash id -> {"crash": DateWindow, optional "pre"/"post": DateWindow}
    windows: dict = field(default_factory=dict)
    # symbol, "auto" (largest median close) or "index" (equal-weight geometric index)
    reference: str = "auto"
    returns: str = "log"
    shrinkage: float = 1e-6
    percentile: float = 75.0
    span_days: int = 105
    drop_isolated: bool = False
    signed_threshold: bool = False
    spike_k: float = 4.0
    lookback: int = 60
    lookahead: int = 60
    edge_guard: float = 0.0
    smooth_days: int = 1
    max_period: float | None = None
    exclude_slowest: int = 0
    bins: int = 64
    sd_threshold: float = 0.2
    max_sift_iters: int = 100
    max_imfs: int = 12
    full_precision: bool = False
    workers: int = 1

    def crash_config(self) -> CrashConfig:
        return CrashConfig(self.spike_k, self.lookback, self.lookahead, self.edge_guard, self.smooth_days)

    def sift_config(self) -> SiftConfig:
        return SiftConfig(self.sd_threshold, self.max_sift_iters, self.max_imfs)

    @property
    def auto(self) -> bool:
        return not self.windows if self.auto_detect is None else self.auto_detect

    def validate(self) -> None:
        if not self.inputs:
            raise ConfigError("no input files given")
        if self.auto_detect is True and self.windows:
            raise ConfigError("auto_detect = true conflicts with explicit crash windows")
        if self.auto_detect is False and not self.windows:
            raise ConfigError("auto_detect = false needs at least one explicit crash window")
        for cid, w in self.windows.items():
            if "crash" not in w:
                raise ConfigError(f"crash id {cid!r} has pre/post windows but no crash window")
        if self.returns not in ("log", "simple"):
            raise ConfigError(f"returns must be 'log' or 'simple', got {self.returns!r}")
        if self.layout not in ("auto", "wide", "long"):
            raise ConfigError(f"layout must be auto, wide or long, got {self.layout!r}")
        if not 0.0 <= self.shrinkage <= 0.1:
            raise ConfigError(f"shrinkage {self.shrinkage} outside [0, 0.1]")
        if not 0 < self.percentile <= 100:
            raise ConfigError(f"percentile {self.percentile} outside (0, 100]")
        if self.span_days < 1:
            raise ConfigError("span_days must be >= 1")
        if self.bins < 2:
            raise ConfigError("bins must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.max_period is not None and not self.max_period > 0:
            raise ConfigError("max_period must be positive")
        try:
            self.crash_config()
            self.sift_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- key=value config

def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(str(x) for x in v)
    return str(v)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _is_none(text: str) -> bool:
    return text.strip().lower() in ("", "none", "null")


_PARSERS = {
    "inputs": lambda t: [p.strip() for p in t.split(",") if p.strip()],
    "study_window": lambda t: None if _is_none(t) else DateWindow.parse(t),
    "missing": MissingPolicy.parse,
    "auto_detect": lambda t: None if _is_none(t) else _parse_bool(t),
    "drop_isolated": _parse_bool,
    "signed_threshold": _parse_bool,
    "full_precision": _parse_bool,
    "max_period": lambda t: None if _is_none(t) else float(t),
}
_INTS = ("span_days", "lookback", "lookahead", "smooth_days", "exclude_slowest", "bins", "max_sift_iters", "max_imfs", "workers")
_FLOATS = ("shrinkage", "percentile", "spike_k", "edge_guard", "sd_threshold")


def set_option(cfg: RunConfig, key: str, value: str) -> None:
    """Apply one ``key = value`` setting; window keys look like
    ``crash.<id>``, ``pre.<id>`` and ``post.<id>``."""
    key = key.strip().replace("-", "_")
    value = value.strip()
    try:
        head, _, cid = key.partition(".")
        if cid and head in PERIODS:
            cfg.windows.setdefault(cid, {})[head] = DateWindow.parse(value)
            return
        if key in _PARSERS:
            setattr(cfg, key, _PARSERS[key](value))
        elif key in _INTS:
            setattr(cfg, key, int(value))
        elif key in _FLOATS:
            setattr(cfg, key, float(value))
        elif key in ("out_dir", "layout", "reference", "returns"):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def read_config(path, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        k, v = line.split("=", 1)
        set_option(cfg, k, v)
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        if f.name != "windows":
            lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    for cid in sorted(cfg.windows):
        for period in PERIODS:
            if period in cfg.windows[cid]:
                lines.append(f"{period}.{cid} = {cfg.windows[cid][period]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- run

@dataclass
class PeriodResult:
    crash_id: str
    period: str
    window: DateWindow
    n_days: int
    n_assets: int
    shrinkage_lambda: float
    mean_partial_correlation: float
    theta: float
    metrics: MetricsReport
    artifacts: dict


@dataclass
class RunReport:
    out_dir: Path
    partitions: dict
    results: list
    artifacts: list
    reference: str | None = None

    def metrics(self, crash_id: str, period: str) -> MetricsReport:
        return self._get(crash_id, period).metrics

    def mean_partial_correlation(self, crash_id: str, period: str) -> float:
        return self._get(crash_id, period).mean_partial_correlation

    def _get(self, crash_id, period) -> PeriodResult:
        for r in self.results:
            if r.crash_id == crash_id and r.period == period:
                return r
        raise KeyError((crash_id, period))


@contextmanager
def stage(name: str):
    """Tag errors escaping a pipeline stage with the stage name."""
    try:
        yield
    except CrashnetError as exc:
        if exc.stage in ("unknown", "config", "data", "numerical"):
            exc.stage = name
        raise
    except np.linalg.LinAlgError as exc:
        err = NumericalError(str(exc))
        err.stage = name
        raise err from exc
    except OSError as exc:
        err = DataError(f"{exc.filename}: {exc.strerror}")
        err.stage = name
        raise err from exc


def geometric_index(panel: PricePanel) -> PriceSeries:
    """Equal-weight geometric mean of closes, a market proxy."""
    return PriceSeries(INDEX_SYMBOL, panel.dates, np.exp(np.log(panel.values).mean(axis=1)))


def reference_series(panel: PricePanel, reference: str) -> PriceSeries:
    if reference == "index":
        return geometric_index(panel)
    if reference == "auto":
        med = np.median(panel.values, axis=0)
        return panel.series(panel.symbols[int(np.argmax(med))])
    if reference not in panel.symbols:
        raise ConfigError(f"reference symbol {reference!r} not among aligned inputs {list(panel.symbols)}")
    return panel.series(reference)


def fmt_float(v, full: bool):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    if isinstance(v, float):
        return v if full else float(format(v, ".6g"))
    return v


def _explicit_partitions(cfg: RunConfig) -> dict:
    one = timedelta(days=1)
    span = timedelta(days=cfg.span_days)
    out = {}
    for cid in sorted(cfg.windows):
        w = cfg.windows[cid]
        crash = w["crash"]
        pre = w.get("pre") or DateWindow(crash.start - span, crash.start - one)
        post = w.get("post") or DateWindow(crash.end + one, crash.end + span)
        out[cid] = PeriodPartition(pre, crash, post)
    return out


def _period_stats(cfg: RunConfig, cid: str, period: str, panel: PricePanel, window: DateWindow):
    with stage(f"correlate[{cid}/{period}]"):
        sub = slice_period(panel, window)
        if sub.dates[0] > window.start or sub.dates[-1] < window.end:
            log.warning("%s/%s: data cover only %s..%s of window %s", cid, period, sub.dates[0], sub.dates[-1], window)
        corr = pearson_matrix(daily_returns(sub, cfg.returns))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            pc = partial_corr_matrix(corr, cfg.shrinkage)
        for w in caught:
            log.warning("%s/%s: %s", cid, period, w.message)
    return sub, pc


def _emit_period(cfg: RunConfig, out: Path, cid: str, period: str, window, sub, pc, theta) -> PeriodResult:
    d = out / cid / period
    d.mkdir(parents=True, exist_ok=True)
    with stage(f"network[{cid}/{period}]"):
        net = build_network(pc, theta, drop_isolated=cfg.drop_isolated, signed=cfg.signed_threshold)
    with stage(f"metrics[{cid}/{period}]"):
        rep = metrics_report(net)
    paths = {
        "pcorr": write_matrix_csv(pc, d / "pcorr.csv", cfg.full_precision),
        "dot": write_dot(net, d / "network.dot"),
        "graphml": write_graphml(net, d / "network.graphml"),
        "metrics": d / "metrics.json",
    }
    paths["metrics"].write_text(report_to_json(rep, cfg.full_precision), encoding="utf-8")
    return PeriodResult(
        cid, period, window, len(sub.dates), len(sub.symbols), pc.shrinkage_lambda,
        mean_offdiagonal(pc), theta, rep, paths,
    )


def run_pipeline(cfg: RunConfig) -> RunReport:
    with stage("config"):
        cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: list[Path] = []

    with stage("ingest"):
        series = load_many(cfg.inputs, None if cfg.layout == "auto" else cfg.layout)
        known = {s.symbol for s in series}
        if cfg.reference not in ("auto", "index") and cfg.reference not in known:
            raise ConfigError(f"reference symbol {cfg.reference!r} not found in inputs")
        report = AlignmentReport()
        panel = align_panel(series, cfg.study_window, cfg.missing, report)
    align_path = out / "alignment.json"
    align_path.write_text(report.to_json() + "\n", encoding="utf-8")
    artifacts.append(align_path)

    ref_name = None
    if cfg.auto:
        with stage("detect"):
            ref = reference_series(panel, cfg.reference)
            ref_name = ref.symbol
            energy, _ = detection_energy(
                ref, cfg.sift_config(), cfg.bins, cfg.exclude_slowest, cfg.max_period
            )
            crash = detect_crash(energy, ref, cfg.crash_config())
            part = partition_periods(crash, cfg.span_days)
        cid = f"crash_{crash.peak_date.isoformat()}"
        partitions = {cid: part}
        artifacts.append(write_energy_csv(energy, out / "energy.csv"))
        artifacts.append(write_crash_json(crash_report(crash, part, ref.symbol), out / "crash.json"))
    else:
        with stage("partition"):
            partitions = _explicit_partitions(cfg)

    jobs = [(cid, period, w) for cid, part in partitions.items() for period, w in part.items()]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        stats = list(pool.map(lambda j: _period_stats(cfg, j[0], j[1], panel, j[2]), jobs))

    results: list[PeriodResult] = []
    for cid in partitions:
        idx = [i for i, j in enumerate(jobs) if j[0] == cid]
        with stage(f"network[{cid}]"):
            # one threshold per crash, pooled over its three periods
            theta = percentile_threshold([stats[i][1] for i in idx], cfg.percentile)
        for i in idx:
            _, period, window = jobs[i]
            sub, pc = stats[i]
            res = _emit_period(cfg, out, cid, period, window, sub, pc, theta)
            results.append(res)
            artifacts.extend(res.artifacts.values())

    artifacts.extend(write_summary(out, cfg, partitions, results, ref_name))
    return RunReport(out, partitions, results, artifacts, ref_name)


# ---------------------------------------------------------------- summary

def _row(r: PeriodResult) -> dict:
    m = r.metrics
    return {
        "crash_id": r.crash_id,
        "period": r.period,
        "start": r.window.start.isoformat(),
        "end": r.window.end.isoformat(),
        "n_days": r.n_days,
        "n_assets": r.n_assets,
        "shrinkage_lambda": r.shrinkage_lambda,
        "theta": r.theta,
        "mean_partial_correlation": r.mean_partial_correlation,
        "degree_density": m.degree_density,
        "avg_clustering": m.avg_clustering,
        "avg_path_length": m.avg_path_length,
        "n_edges": m.n_edges,
        "n_components": m.n_components,
        "reachable_pair_fraction": m.reachable_pair_fraction,
    }


def summary_tables(results: list) -> dict:
    """``{metric: {crash_id: {period: value}}}``, one table per metric."""
    tables: dict = {k: {} for k in TABLE_METRICS}
    for r in results:
        row = _row(r)
        for k in TABLE_METRICS:
            tables[k].setdefault(r.crash_id, {})[r.period] = row[k]
    return tables


def write_summary(out: Path, cfg: RunConfig, partitions: dict, results: list, reference) -> list[Path]:
    full = cfg.full_precision
    rows = [{k: fmt_float(v, full) for k, v in _row(r).items()} for r in results]
    tables = {
        k: {cid: {p: fmt_float(v, full) for p, v in t.items()} for cid, t in tab.items()}
        for k, tab in summary_tables(results).items()
    }
    doc = {
        "reference": reference,
        "percentile": cfg.percentile,
        "returns": cfg.returns,
        "partitions": {cid: p.to_dict() for cid, p in partitions.items()},
        "periods": rows,
        "tables": tables,
    }
    js = out / "summary.json"
    js.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    cs = out / "summary.csv"
    with cs.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(rows[0]) if rows else []
        w.writerow(header)
        for row in rows:
            w.writerow(["" if row[k] is None else row[k] for k in header])

    tb = out / "tables.csv"
    with tb.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "crash_id", *PERIODS])
        for k in TABLE_METRICS:
            for cid in sorted(tables[k]):
                vals = [tables[k][cid].get(p) for p in PERIODS]
                w.writerow([k, cid, *("" if v is None else v for v in vals)])
    return [js, cs, tb]
