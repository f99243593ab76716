"""Command-line entry point: simulate, ingest, bands, features, fit, rul, report, verify."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .domain import Quarter
from .report import ReportSpec, count_no_data, render_report
from .store import Store, StoreError, _atomic_write
from .synth import SimConfig, write_raw

log = logging.getLogger("escalator_rul")

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


def _quarter(text: str) -> Quarter:
    try:
        return Quarter.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ids(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated escalator ids, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="escalator-rul", description="Escalator condition monitoring and RUL pipeline.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    s = sub.add_parser("simulate", help="write a synthetic raw data drop")
    s.add_argument("--config", type=Path, help="simulation config JSON (defaults to the built-in fleet and quarter)")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--seed", type=int, help="overrides the config seed")

    s = sub.add_parser("ingest", help="validate raw files into the store")
    s.add_argument("--raw", type=Path, required=True)
    s.add_argument("--store", type=Path, required=True)

    s = sub.add_parser("bands", help="select dominant frequency bands from stored spectra")
    s.add_argument("--store", type=Path, required=True)

    s = sub.add_parser("features", help="compute daily, A_t and quarterly features")
    s.add_argument("--store", type=Path, required=True)
    s.add_argument("--quarter", type=_quarter, required=True)
    s.add_argument("--renormalize-missing-sensors", action="store_true")

    s = sub.add_parser("fit", help="fit the reference LHI-vs-age model")
    s.add_argument("--store", type=Path, required=True)
    s.add_argument("--t-end", type=float, default=35.0)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exclude", type=_ids, default=())
    g.add_argument("--auto-exclude", type=int, default=0)
    s.add_argument("--out", default="models/lhi.json", help="relative paths land under the store")

    s = sub.add_parser("rul", help="remaining useful life table for a quarter")
    s.add_argument("--store", type=Path, required=True)
    s.add_argument("--model", default="default", help="'default' or a model JSON path")
    s.add_argument("--quarter", type=_quarter, required=True)
    s.add_argument("--t-end", type=float, help="override the model's end-of-life age")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("report", help="render the static HTML report")
    s.add_argument("--store", type=Path, required=True)
    s.add_argument("--spec", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("verify", help="recount store partitions against the manifest")
    s.add_argument("--store", type=Path, required=True)
    return p


def _simulate(args) -> int:
    d = json.loads(args.config.read_text()) if args.config else {}
    if args.seed is not None:
        d["seed"] = args.seed
    counts = write_raw(SimConfig.from_json(d), args.out)
    print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


def _ingest(args) -> int:
    report = Store(args.store).ingest(args.raw)
    print(json.dumps(report.to_json(), sort_keys=True))
    return EXIT_OK if report.ok else EXIT_INVALID


def _bands(args) -> int:
    for fc, sel in sorted(pipeline.run_bands(Store(args.store)).items(), key=lambda kv: kv[0].value):
        print(f"{fc.value}: [{sel.band_lo_khz}, {sel.band_hi_khz}] kHz")
    return EXIT_OK


def _features(args) -> int:
    res = pipeline.run_features(
        Store(args.store), args.quarter, renormalize_missing_sensors=args.renormalize_missing_sensors
    )
    for f in res.features:
        print(f"{f.escalator_id}\t{f.lhi:.4f}")
    for esc, why in sorted(res.skipped.items()):
        print(f"escalator {esc} skipped: {why}", file=sys.stderr)
    if not res.features:
        print(f"no features computed for {args.quarter}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _fit(args) -> int:
    model = pipeline.run_fit(
        Store(args.store), args.out, t_end_years=args.t_end, exclude=args.exclude, auto_exclude=args.auto_exclude
    )
    print(f"a={model.a!r} b={model.b!r} t_end={model.t_end_years!r} excluded={list(model.excluded)}")
    return EXIT_OK


def _rul(args) -> int:
    store = Store(args.store)
    model = pipeline.resolve_model(store, args.model, args.t_end)
    text = pipeline.run_rul(store, model, args.quarter)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(args.out, text)
    return EXIT_OK


def _report(args) -> int:
    spec = ReportSpec.load(args.spec)
    html = render_report(spec, Store(args.store))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(args.out, html)
    missing = count_no_data(html)
    if missing:
        print(f"warning: {missing} panel(s) without data", file=sys.stderr)
    return EXIT_OK


def _verify(args) -> int:
    if not (args.store / "manifest.json").exists():
        print(f"{args.store} is not a store", file=sys.stderr)
        return EXIT_INVALID
    problems = Store(args.store).verify()
    for p in problems:
        print(p)
    print("ok" if not problems else f"{len(problems)} problem(s)")
    return EXIT_INVALID if problems else EXIT_OK


COMMANDS = {
    "simulate": _simulate, "ingest": _ingest, "bands": _bands, "features": _features,
    "fit": _fit, "rul": _rul, "report": _report, "verify": _verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (StoreError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
