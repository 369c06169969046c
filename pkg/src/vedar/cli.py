"""``vedar`` command line: detect, bench, synth and plotdata.

Exit status is 0 on success and 2 on any input error; diagnostics go to
stderr, results to stdout or the requested file.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .bench import BASELINES, JSONL, NAB_DATASETS, TEXT, emit_report, run_benchmark
from .core import AUTO, SILVERMAN, DetectorConfig, VedarError
from .detector import Detector
from .ingest import (
    GENERATORS, TIMESTAMP_FORMAT, dump_label_windows, iter_nab_rows, load_label_windows,
    load_nab_csv, parse_timestamp, truth_windows, write_csv,
)

EXIT_OK = 0
EXIT_INPUT = 2


class InputError(Exception):
    pass


def _auto_or(kind, auto: str = AUTO):
    def parse(text: str):
        if text.lower() == auto:
            return auto
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {auto!r} or a number, got {text!r}") from None
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return value
    return parse


def _bandwidth(text: str):
    if text.lower() in (AUTO, SILVERMAN):
        return SILVERMAN
    return _auto_or(float, SILVERMAN)(text)


def _period(text: str):
    if text.lower() == "none":
        return None
    return _auto_or(int)(text)


# flag -> DetectorConfig field
CONFIG_FLAGS = {
    "scale": "scaling_factor", "period": "period", "seasonal_window": "seasonal_window_w",
    "pewma_alpha": "pewma_alpha", "pewma_beta": "pewma_beta", "kde_bandwidth": "kde_bandwidth",
    "sample_budget": "sample_budget", "dbscan_min_pts": "dbscan_min_pts",
    "sigma_mult": "sigma_multiplier", "linear_orders": "linear_scale_orders",
    "linear_window": "linear_scale_window", "warmup": "warmup_points",
    "cooldown": "cooldown", "seed": "seed",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector")
    g.add_argument("--scale", type=_auto_or(float), help="scaling factor or 'auto'")
    g.add_argument("--period", type=_period, help="period in samples, 'auto' or 'none'")
    g.add_argument("--seasonal-window", type=int, help="seasonal window width w")
    g.add_argument("--pewma-alpha", type=float)
    g.add_argument("--pewma-beta", type=float)
    g.add_argument("--kde-bandwidth", type=_bandwidth, help="bandwidth, or 'auto' for Silverman's rule")
    g.add_argument("--sample-budget", type=int)
    g.add_argument("--dbscan-min-pts", type=int)
    g.add_argument("--sigma-mult", type=float, help="sigma multiplier of the empirical rule")
    g.add_argument("--linear-orders", type=float, help="decades of likelihood drop for a linear change")
    g.add_argument("--linear-window", type=int, help="window of the linear-change rule")
    g.add_argument("--warmup", type=int, help="points buffered before detection starts")
    g.add_argument("--cooldown", action=argparse.BooleanOptionalAction, default=None,
                   help="suppress repeats of one change type (default on)")


def _config(args) -> DetectorConfig:
    changes = {}
    for flag, name in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None or (flag == "period" and args.period_given):
            changes[name] = value
    return DetectorConfig().override(**changes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vedar", description="Streaming behaviour change detection.")
    parser.add_argument("--version", action="version", version=f"vedar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="seed for every stochastic component")
        p.add_argument("--format", choices=(TEXT, JSONL), default=None)

    d = sub.add_parser("detect", help="stream a timestamp,value CSV and print alerts")
    d.add_argument("input", nargs="?", default="-", help="CSV path, or '-' for stdin")
    common(d)
    _add_config_flags(d)

    b = sub.add_parser("bench", help="score the detector on NAB datasets")
    b.add_argument("--data", required=True, help="NAB data directory")
    b.add_argument("--labels", required=True, help="combined_windows.json")
    b.add_argument("--dataset", action="append",
                   help="category/name.csv; repeatable (default: the five comparison files)")
    b.add_argument("--baseline", action="append", default=[], metavar="NAME=DIR",
                   help=f"baseline results directory, NAME one of {sorted(BASELINES)}")
    b.add_argument("--epsilon", type=float, default=0.01, help="baseline score threshold is 1 - epsilon")
    b.add_argument("--both", action="store_true", help="report with and without cooldown")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--output", "-o", help="write the report here instead of stdout")
    common(b)
    _add_config_flags(b)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("generator", choices=sorted(GENERATORS))
    s.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter (Python literal); repeatable")
    s.add_argument("--output", "-o", help="CSV path (default stdout)")
    s.add_argument("--labels-out", help="also write label windows around the injected changes")
    s.add_argument("--name", help="dataset key in the labels file (default: the output file name)")
    s.add_argument("--seed", type=int, default=None)

    pd = sub.add_parser("plotdata", help="join a dataset with alerts and labels into a plot-ready CSV")
    pd.add_argument("input", help="dataset CSV")
    pd.add_argument("--alerts", required=True, help="JSON-lines alerts as printed by 'detect --format jsonl'")
    pd.add_argument("--labels", help="combined_windows.json")
    pd.add_argument("--key", help="dataset key in the labels file (default: matched by file name)")
    pd.add_argument("--output", "-o", help="CSV path (default stdout)")
    return parser


def _open_input(path: str):
    if path == "-":
        return sys.stdin
    try:
        return open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def run_detect(args, out=None) -> int:
    out = out or sys.stdout
    config = _config(args)
    fmt = args.format or JSONL
    det = Detector(config)
    fh = _open_input(args.input)
    try:
        for p in iter_nab_rows(fh):
            o = det.process(p)
            if o.alert is None:
                continue
            rec = o.alert.to_record()
            if fmt == JSONL:
                out.write(json.dumps(rec) + "\n")
            else:
                out.write(f"{rec['timestamp']}  {rec['type']:<22} actual={rec['actual']:.6g} "
                          f"expected={rec['expected']:.6g} likelihood={rec['likelihood']:.4g}\n")
            out.flush()
    finally:
        if fh is not sys.stdin:
            fh.close()
    return EXIT_OK


def _baselines(items: Sequence[str]) -> Dict[str, str]:
    found = {}
    for item in items:
        name, sep, root = item.partition("=")
        if not sep or name not in BASELINES:
            raise InputError(f"--baseline expects NAME=DIR with NAME in {sorted(BASELINES)}, got {item!r}")
        found[name] = root
    return found


def run_bench(args, out=None) -> int:
    out = out or sys.stdout
    config = _config(args)
    reports = run_benchmark(
        args.data, args.labels, datasets=args.dataset or NAB_DATASETS, config=config,
        cooldown_variants=(True, False) if args.both else (config.cooldown,),
        baselines=_baselines(args.baseline), epsilon=args.epsilon, workers=args.workers,
    )
    text = emit_report(reports, args.format or TEXT)
    if args.output:
        Path(args.output).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def run_synth(args, out=None) -> int:
    out = out or sys.stdout
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--param expects KEY=VALUE, got {item!r}")
        params[key] = _literal(value)
    if args.seed is not None:
        params["seed"] = args.seed
    try:
        result = GENERATORS[args.generator](**params)
    except TypeError as exc:
        raise InputError(f"bad parameters for {args.generator}: {exc}") from None
    text = write_csv(result.dataset)
    if args.output:
        Path(args.output).write_text(text)
    else:
        out.write(text)
    if args.labels_out:
        key = args.name or (Path(args.output).name if args.output else f"{args.generator}.csv")
        Path(args.labels_out).write_text(dump_label_windows({key: truth_windows(result)}))
    return EXIT_OK


def _load_alerts(path: str) -> Dict[str, str]:
    alerts = {}
    fh = _open_input(path)
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                stamp = parse_timestamp(rec["timestamp"]).strftime(TIMESTAMP_FORMAT)
                alerts[stamp] = str(rec.get("type", ""))
            except (ValueError, KeyError, TypeError):
                raise InputError(f"{path}: bad alert record at line {lineno}") from None
    return alerts


def run_plotdata(args, out=None) -> int:
    out = out or sys.stdout
    try:
        data = load_nab_csv(args.input)
    except OSError as exc:
        raise InputError(f"cannot read {args.input}: {exc.strerror}") from None
    alerts = _load_alerts(args.alerts)
    windows = []
    if args.labels:
        try:
            labels = load_label_windows(args.labels)
        except OSError as exc:
            raise InputError(f"cannot read {args.labels}: {exc.strerror}") from None
        key = args.key
        if key is None:
            name = Path(args.input).name
            matches = [k for k in labels if Path(k).name == name]
            key = matches[0] if matches else None
        if key is not None and key not in labels:
            raise InputError(f"{args.labels} has no entry {key!r}")
        windows = labels.get(key, []) if key else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "value", "is_alert", "alert_type", "is_label_window"])
    for p in data.points:
        stamp = p.timestamp.strftime(TIMESTAMP_FORMAT)
        kind = alerts.get(stamp)
        inside = any(s <= p.timestamp <= e for s, e in windows)
        w.writerow([stamp, repr(p.value), int(kind is not None), kind or "", int(inside)])
    if args.output:
        Path(args.output).write_text(buf.getvalue())
    else:
        out.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {"detect": run_detect, "bench": run_bench, "synth": run_synth, "plotdata": run_plotdata}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.period_given = any(a == "--period" or a.startswith("--period=") for a in argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, VedarError) as exc:
        print(f"vedar: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
