"""Command-line entry point: ``crashnet run`` plus one subcommand per stage."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields
from datetime import date
from pathlib import Path

import numpy as np

from .costats import daily_returns, partial_corr_matrix, pearson_matrix, read_matrix_csv, write_matrix_csv
from .emd import SiftConfig, decompose, read_imf_csv, write_imf_csv
from .errors import ConfigError, CrashnetError, DataError
from .hspec import (
    crash_report,
    detect_crash,
    detection_energy,
    hilbert_spectrum,
    instantaneous_energy,
    partition_periods,
    read_crash_json,
    write_crash_json,
    write_energy_csv,
    write_spectrum_csv,
)
from .ingest import DateWindow, MissingPolicy, align_panel, load_many, slice_period
from .netbuild import build_network, percentile_threshold, read_network, write_dot, write_graphml
from .netmetrics import metrics_report, report_to_json
from .pipeline import PERIODS, RunConfig, dump_config, read_config, reference_series, run_pipeline, set_option, stage

OUT_ENV = "CRASHNET_OUT"

log = logging.getLogger("crashnet")


# ---------------------------------------------------------------- run / config

def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--crash", action="append", default=[], metavar="ID=START:END", help="explicit crash window")
    p.add_argument("--pre", action="append", default=[], metavar="ID=START:END", help="explicit pre-crash window")
    p.add_argument("--post", action="append", default=[], metavar="ID=START:END", help="explicit post-crash window")
    for f in fields(RunConfig):
        if f.name == "windows":
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name == "inputs":
            p.add_argument(flag, nargs="+", metavar="CSV")
        else:
            p.add_argument(flag, dest=f.name, metavar=f.name.upper())


def _build_config(args) -> RunConfig:
    cfg = read_config(args.config) if args.config else RunConfig()
    env_out = os.environ.get(OUT_ENV)
    if env_out:
        cfg.out_dir = env_out
    for f in fields(RunConfig):
        if f.name == "windows":
            continue
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if f.name == "inputs":
            cfg.inputs = list(value)
        else:
            set_option(cfg, f.name, value)
    for kind in PERIODS:
        for item in getattr(args, kind):
            cid, sep, win = item.partition("=")
            if not sep:
                raise ConfigError(f"--{kind} expects ID=START:END, got {item!r}")
            set_option(cfg, f"{kind}.{cid}", win)
    for item in args.set:
        k, sep, v = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        set_option(cfg, k, v)
    return cfg


def cmd_run(args) -> int:
    cfg = _build_config(args)
    report = run_pipeline(cfg)
    print(report.out_dir / "summary.json")
    return 0


def cmd_config(args) -> int:
    sys.stdout.write(dump_config(_build_config(args)))
    return 0


# ---------------------------------------------------------------- stage subcommands

def _parse_label(text: str):
    try:
        return date.fromisoformat(text)
    except ValueError:
        return text


def read_column(path, column: str | None = None) -> tuple[list, np.ndarray]:
    """First CSV column as the index, ``column`` (default: the second) as
    float values."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header = rows[0]
    if column is None:
        if len(header) < 2:
            raise DataError(f"{path}: need an index column and a value column")
        j = 1
    elif column in header:
        j = header.index(column)
    else:
        raise DataError(f"{path}: no column {column!r} (have {header})")
    try:
        values = np.array([float(r[j]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from None
    return [_parse_label(r[0]) for r in rows[1:]], values


def _sift_config(args) -> SiftConfig:
    return SiftConfig(args.sd_threshold, args.max_sift_iters, args.max_imfs)


def cmd_decompose(args) -> int:
    with stage("decompose"):
        index, x = read_column(args.input, args.column)
        if args.log:
            if (x <= 0).any():
                raise DataError("--log needs positive values")
            x = np.log(x)
        imfs = decompose(x, _sift_config(args))
        out = write_imf_csv(imfs, args.out, index)
    print(out)
    return 0


def cmd_spectrum(args) -> int:
    with stage("spectrum"):
        index, imfs = read_imf_csv(args.imfs)
        rows = imfs.matrix()
        if args.include_residual:
            rows = np.vstack([rows, imfs.residual])
        axis = [_parse_label(t) for t in index]
        spec = hilbert_spectrum(rows, args.bins, time_axis=axis)
        out = write_spectrum_csv(spec, args.out)
        if args.energy_out:
            write_energy_csv(instantaneous_energy(spec), args.energy_out)
    print(out)
    return 0


def _load_panel(args):
    series = load_many(args.inputs, args.layout)
    window = DateWindow.parse(args.study_window) if getattr(args, "study_window", None) else None
    return align_panel(series, window, MissingPolicy.parse(args.missing))


def cmd_detect(args) -> int:
    cfg = RunConfig(inputs=list(args.inputs))
    for key in ("reference", "spike_k", "lookback", "lookahead", "edge_guard", "smooth_days",
                "max_period", "exclude_slowest", "bins", "span_days"):
        value = getattr(args, key)
        if value is not None:
            set_option(cfg, key, str(value))
    cfg.validate()
    with stage("detect"):
        if len(args.inputs) == 1 and args.reference not in (None, "auto", "index"):
            series = {s.symbol: s for s in load_many(args.inputs, args.layout)}
            if args.reference not in series:
                raise ConfigError(f"reference symbol {args.reference!r} not found in inputs")
            ref = series[args.reference]
        else:
            series = load_many(args.inputs, args.layout)
            ref = series[0] if len(series) == 1 else reference_series(_load_panel(args), cfg.reference)
        energy, _ = detection_energy(ref, cfg.sift_config(), cfg.bins, cfg.exclude_slowest, cfg.max_period)
        crash = detect_crash(energy, ref, cfg.crash_config())
        part = partition_periods(crash, cfg.span_days)
        out = write_crash_json(crash_report(crash, part, ref.symbol), args.out)
        if args.energy_out:
            write_energy_csv(energy, args.energy_out)
    print(out)
    return 0


def cmd_correlate(args) -> int:
    with stage("correlate"):
        panel = _load_panel(args)
        if args.window and args.crash_json:
            raise ConfigError("give either --window or --crash-json, not both")
        if args.window:
            panel = slice_period(panel, DateWindow.parse(args.window))
        elif args.crash_json:
            _, part = read_crash_json(args.crash_json)
            panel = slice_period(panel, dict(part.items())[args.period])
        pc = partial_corr_matrix(pearson_matrix(daily_returns(panel, args.returns)), args.shrinkage)
        out = write_matrix_csv(pc, args.out, args.full_precision)
    print(out)
    return 0


def _write_network(net, path):
    suffix = Path(path).suffix.lower()
    if suffix in (".dot", ".gv"):
        return write_dot(net, path)
    if suffix in (".graphml", ".xml"):
        return write_graphml(net, path)
    raise ConfigError(f"{path}: output must end in .dot or .graphml")


def cmd_network(args) -> int:
    with stage("network"):
        pc = read_matrix_csv(args.pcorr)
        if args.theta is not None:
            theta = args.theta
        else:
            pool = [pc] + [read_matrix_csv(p) for p in args.pool]
            theta = percentile_threshold(pool, args.percentile)
        net = build_network(pc, theta, drop_isolated=args.drop_isolated, signed=args.signed)
        outs = [_write_network(net, p) for p in args.out]
    for p in outs:
        print(p)
    return 0


def cmd_metrics(args) -> int:
    with stage("metrics"):
        net = read_network(args.network)
        text = report_to_json(metrics_report(net), args.full_precision)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- parser

def _add_panel_options(p, multi: bool = True) -> None:
    p.add_argument("inputs", nargs="+" if multi else 1, metavar="CSV")
    p.add_argument("--layout", choices=("wide", "long"), default=None)
    p.add_argument("--missing", default="drop_asset", help="drop_asset or forward_fill(N)")
    p.add_argument("--study-window", default=None, metavar="START:END")


def _add_sift_options(p) -> None:
    d = SiftConfig()
    p.add_argument("--sd-threshold", type=float, default=d.sd_threshold)
    p.add_argument("--max-sift-iters", type=int, default=d.max_sift_iters)
    p.add_argument("--max-imfs", type=int, default=d.max_imfs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline")
    _add_run_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("config", help="print the effective configuration")
    p.add_argument("action", choices=("dump",))
    _add_run_options(p)
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("decompose", help="EMD of one CSV column")
    p.add_argument("input")
    p.add_argument("--column", default=None, help="value column (default: second column)")
    p.add_argument("--log", action="store_true", help="decompose log of the values")
    p.add_argument("--out", default="imfs.csv")
    _add_sift_options(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("spectrum", help="Hilbert spectrum of an IMF dump")
    p.add_argument("imfs")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--include-residual", action="store_true")
    p.add_argument("--out", default="spectrum.csv")
    p.add_argument("--energy-out", default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("detect", help="crash window from energy spikes")
    _add_panel_options(p)
    p.add_argument("--reference", default=None, help="symbol, auto or index")
    for key, typ in (("spike_k", float), ("lookback", int), ("lookahead", int), ("edge_guard", float),
                     ("smooth_days", int), ("max_period", float), ("exclude_slowest", int),
                     ("bins", int), ("span_days", int)):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    p.add_argument("--out", default="crash.json")
    p.add_argument("--energy-out", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("correlate", help="partial correlation heatmap CSV")
    _add_panel_options(p)
    p.add_argument("--window", default=None, metavar="START:END")
    p.add_argument("--crash-json", default=None)
    p.add_argument("--period", choices=PERIODS, default="crash")
    p.add_argument("--returns", choices=("log", "simple"), default="log")
    p.add_argument("--shrinkage", "--lambda", dest="shrinkage", type=float, default=1e-6)
    p.add_argument("--full-precision", action="store_true")
    p.add_argument("--out", default="pcorr.csv")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("network", help="threshold network from a heatmap CSV")
    p.add_argument("pcorr")
    p.add_argument("--pool", nargs="*", default=[], help="extra matrices pooled into the percentile")
    p.add_argument("--percentile", type=float, default=75.0)
    p.add_argument("--theta", type=float, default=None, help="fixed threshold (overrides --percentile)")
    p.add_argument("--drop-isolated", action="store_true")
    p.add_argument("--signed", action="store_true")
    p.add_argument("--out", nargs="+", default=["network.dot"])
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("metrics", help="topology metrics of a DOT/GraphML network")
    p.add_argument("network")
    p.add_argument("--out", default=None)
    p.add_argument("--full-precision", action="store_true")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CrashnetError as exc:
        err = {"error": type(exc).__name__, "stage": exc.stage, "message": str(exc)}
        sys.stderr.write(json.dumps(err) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
