"""Command-line entry point: ``linklens {ingest,entropy,detect,report,synth}``.

Exit codes: 0 ok, 3 findings present (detect), 1 usage error, 2 data error.
Every command writes ``config.json`` with its effective parameters next to
its outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from .detect import (
    REGISTRATION_FLOOR_WEI,
    Scenario,
    detect_bonus_hunters,
    detect_wash_trading,
    hunter_activity_series,
    infer_cross_layer_links,
)
from .entropy import TWO_DAYS, entropy_series, growth_correlation, write_series_csv
from .errors import CapabilityError, EmptyDatasetError, LinkLensError, SpecError
from .ingest import BUNDLE_FILES, BundleLoad, assemble, load_bundle, load_follows, load_transactions, load_users
from .model import Layer
from .svg import write_line_chart
from .synth import generate, load_spec, write_bundle
from .ties import (
    activity_timeline,
    classify_ties,
    cohort_tie_stats,
    daily_buy_sell_mix,
    elite_holder_overlap,
    holding_relation,
    token_distribution,
    top_holders,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FINDINGS = 0, 1, 2, 3
DEFAULT_OUT = "linklens_out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage is 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


_GLOBAL_DEFAULTS: dict[str, Any] = {
    "out": None,
    "format": "table",
    "mode": "weak",
    "bucket": TWO_DAYS,
    "ratio_min": 5.0,
    "min_sells": 3,
    "floor_wei": REGISTRATION_FLOOR_WEI,
    "seed": None,
}


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--out", help="output directory (default: $LINKLENS_OUT or ./linklens_out)")
    p.add_argument("--format", choices=("json", "csv", "table"), help="stdout rendering")
    p.add_argument("--mode", choices=("weak", "strong"), help="component mode")
    p.add_argument("--bucket", type=int, metavar="SECONDS", help="entropy bucket width")
    p.add_argument("--ratio-min", type=float, dest="ratio_min", metavar="R")
    p.add_argument("--min-sells", type=int, dest="min_sells", metavar="N")
    p.add_argument("--floor-wei", type=int, dest="floor_wei", metavar="W")
    p.add_argument("--seed", type=int, metavar="S", help="override the synth spec seed")
    return p


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags()
    parser = _Parser(prog="linklens", description=__doc__.splitlines()[0], parents=[flags])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[flags], help="load and summarise a dataset")
    p.add_argument("paths", nargs="+", help="bundle directory or individual users/txs_l1/txs_l2/follows files")

    p = sub.add_parser("entropy", parents=[flags], help="structural entropy loss series")
    p.add_argument("paths", nargs="+")
    p.add_argument("--nodes", choices=("pre", "post"), default="pre", help="when new accounts enter a bucket")

    p = sub.add_parser("detect", parents=[flags], help="bonus hunters, wash trading, cross-layer links")
    p.add_argument("paths", nargs="+")
    p.add_argument("--which", choices=("hunters", "wash", "links", "all"), default="all")
    p.add_argument("--window-threshold", type=float, default=0.5, dest="window_threshold")

    p = sub.add_parser("report", parents=[flags], help="platform characterisation tables")
    p.add_argument("paths", nargs="+")
    p.add_argument("--top", type=int, default=10, help="size of the top-holder cohort")

    p = sub.add_parser("synth", parents=[flags], help="generate a synthetic bundle with ground truth")
    p.add_argument("spec", nargs="?", help="scenario JSON (default: bundled example)")
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    for key, value in _GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    if args.out is None:
        args.out = os.environ.get("LINKLENS_OUT") or DEFAULT_OUT
    if args.bucket <= 0:
        raise UsageError(f"--bucket must be positive, got {args.bucket}")
    if args.min_sells < 1:
        raise UsageError(f"--min-sells must be >= 1, got {args.min_sells}")
    if args.ratio_min < 0 or args.floor_wei < 0:
        raise UsageError("--ratio-min and --floor-wei must be non-negative")
    return args


# -- io helpers --------------------------------------------------------------

def _load(paths: Sequence[str]) -> BundleLoad:
    if len(paths) == 1 and Path(paths[0]).is_dir():
        return load_bundle(paths[0])
    by_name = {name: key for key, names in BUNDLE_FILES.items() for name in names}
    accounts, txs, follows, errors = [], [], [], []
    found: dict[str, str] = {}
    rows: dict[str, int] = {}
    for raw in paths:
        path = Path(raw)
        key = by_name.get(path.name)
        if key is None:
            raise UsageError(f"cannot tell what {raw} holds; expected one of {sorted(by_name)}")
        if not path.exists():
            raise FileNotFoundError(f"input not found: {raw}")
        if key == "users":
            res = load_users(path)
            accounts += res.items
        elif key == "follows":
            res = load_follows(path)
            follows += res.items
        else:
            res = load_transactions(path, layer=Layer.L1 if key == "txs_l1" else Layer.L2)
            txs += res.items
        found[key] = path.name
        rows[key] = len(res.items)
        errors += res.errors
    missing = [names[0] for key, names in BUNDLE_FILES.items() if key not in found]
    return BundleLoad(assemble(accounts, txs, follows, sources=found, rows=rows), errors, found, missing)


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_jsonl(path: Path, records: Sequence[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, separators=(",", ":")) + "\n")


def _echo_config(out: Path, args: argparse.Namespace, **extra: Any) -> None:
    cfg = {k: v for k, v in vars(args).items() if not k.startswith("_")}
    cfg["out"] = str(out)
    cfg.update(extra)
    _write_json(out / "config.json", cfg)


Section = tuple[str, Sequence[str], Sequence[Sequence[Any]]]


def _render(sections: Sequence[Section], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(
            {name: [dict(zip(header, map(_plain, row))) for row in rows] for name, header, rows in sections},
            indent=2,
        ) + "\n"
    buf = io.StringIO()
    for k, (name, header, rows) in enumerate(sections):
        if k:
            buf.write("\n")
        if fmt == "csv":
            buf.write(f"# {name}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            continue
        cells = [list(map(str, header))] + [[str(c) for c in row] for row in rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
        buf.write(f"{name}\n")
        for i, r in enumerate(cells):
            buf.write("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() + "\n")
            if i == 0:
                buf.write("  ".join("-" * wd for wd in widths) + "\n")
    return buf.getvalue()


def _plain(v: Any) -> Any:
    return v if isinstance(v, (int, float, bool, type(None))) else str(v)


# -- commands ----------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace, out: Path) -> tuple[int, list[Section]]:
    bundle = _load(args.paths)
    ds = bundle.dataset
    summary = {
        "meta": ds.meta.as_dict(),
        "missing": bundle.missing,
        "row_errors": len(bundle.errors),
        "holding_source": "follows" if ds.follows else "reconstructed from share trades",
    }
    notes = []
    if "follows.csv" in bundle.missing:
        notes.append("follows file missing: holding relation will be reconstructed from share trades")
    if "txs_l1.csv" in bundle.missing:
        notes.append("txs_l1 file missing: cross-layer scenarios S2/S3 unavailable")
    summary["notes"] = notes
    _write_json(out / "ingest_summary.json", summary)
    err_path = out / "ingest_errors.csv"
    if bundle.errors:
        _write_csv(err_path, ("path", "line", "message"), [(e.path, e.line, e.message) for e in bundle.errors])
    elif err_path.exists():
        err_path.unlink()
    _echo_config(out, args)
    span = ds.meta.time_span
    rows = [
        ("accounts", ds.meta.n_accounts),
        ("accounts_l1", len(ds.accounts_in(Layer.L1))),
        ("accounts_l2", len(ds.accounts_in(Layer.L2))),
        ("transactions", ds.meta.n_transactions),
        ("follows", ds.meta.n_follows),
        ("auto_created", ds.meta.auto_created),
        ("duplicate_tx_dropped", ds.meta.duplicate_tx_dropped),
        ("row_errors", len(bundle.errors)),
        ("span_start", span[0] if span else ""),
        ("span_end", span[1] if span else ""),
    ]
    rows += [(f"rows_{k}", v) for k, v in sorted(ds.meta.rows)]
    sections: list[Section] = [("dataset", ("field", "value"), rows)]
    if notes:
        sections.append(("notes", ("note",), [(n,) for n in notes]))
    return (EXIT_DATA if bundle.errors else EXIT_OK), sections


def cmd_entropy(args: argparse.Namespace, out: Path) -> tuple[int, list[Section]]:
    ds = _load(args.paths).dataset
    series = entropy_series(ds, mode=args.mode, bucket_seconds=args.bucket, nodes=args.nodes)
    csv_path = out / f"entropy_{args.mode}.csv"
    write_series_csv(series, csv_path)
    write_line_chart(
        out / f"entropy_{args.mode}.svg",
        {"cumulative loss": [c for _, c in series.cumulative], "loss": series.losses},
        title=f"Accumulated structural entropy loss ({args.mode})",
        x_label=f"bucket ({args.bucket} s)",
        y_label="nats",
    )
    corr = growth_correlation(series) if len(series.points) >= 2 else None
    summary = {
        "mode": args.mode,
        "bucket_seconds": args.bucket,
        "nodes": args.nodes,
        "buckets": len(series.points),
        "origin_ts": series.origin_ts,
        "total_loss": series.total_loss,
        "final_h": series.points[-1].h_after,
        "final_nodes": series.points[-1].n_nodes,
        "correlation": None if corr is None else {
            "slope": corr.slope, "intercept": corr.intercept, "r": corr.r, "r_defined": corr.r_defined,
        },
    }
    _write_json(out / f"entropy_{args.mode}_summary.json", summary)
    _echo_config(out, args)
    rows = [(k, v) for k, v in summary.items() if k != "correlation"]
    if corr is not None:
        rows += [("slope", corr.slope), ("r", corr.r)]
    return EXIT_OK, [("entropy", ("field", "value"), rows)]


def cmd_detect(args: argparse.Namespace, out: Path) -> tuple[int, list[Section]]:
    bundle = _load(args.paths)
    ds = bundle.dataset
    which = args.which
    has_l1 = ds.has_layer(Layer.L1)
    if which == "links" and not has_l1:
        raise CapabilityError("links need layer-1 transactions; txs_l1.csv is missing", "txs_l1.csv")

    counts: dict[str, int] = {}
    table: list[tuple[Any, ...]] = []
    hunters = None
    if which in ("hunters", "links", "all"):
        hunters = detect_bonus_hunters(ds, ratio_min=args.ratio_min, min_sells=args.min_sells)
    if which in ("hunters", "all"):
        _write_jsonl(out / "hunters.jsonl", [h.to_dict() for h in hunters])
        activity = hunter_activity_series(hunters, ds.meta.time_span)
        _write_csv(out / "hunter_activity.csv", ("month", "active_clusters"),
                   list(zip(activity.months, activity.active_clusters)))
        counts["hunters"] = len(hunters)
        table += [("hunter", h.main_account, ",".join(h.subsidiaries)) for h in hunters]
    if which in ("wash", "all"):
        wash = detect_wash_trading(ds, registration_floor_wei=args.floor_wei, window_threshold=args.window_threshold)
        _write_jsonl(out / "wash.jsonl", [w.to_dict() for w in wash.findings])
        _write_jsonl(out / "wash_windows.jsonl", [w.to_dict() for w in wash.windows])
        counts["wash"] = len(wash.findings)
        table += [("wash_window", w.to_dict()["start"], f"{w.to_dict()['end']} {w.flagged}/{w.new_users}")
                  for w in wash.windows]
    scenarios = None
    if which in ("links", "all"):
        scenarios = list(Scenario) if has_l1 else [Scenario.S1_L2_CLUSTER]
        links = infer_cross_layer_links(
            ds,
            hunters=hunters,
            scenarios=scenarios,
            ratio_min=args.ratio_min,
            min_sells=args.min_sells,
            registration_floor_wei=args.floor_wei,
        )
        _write_jsonl(out / "links.jsonl", [link.to_dict() for link in links])
        counts["links"] = len(links)
        table += [
            (link.scenario.value, ",".join(link.l2_accounts), ",".join(link.l1_accounts) + f" [{link.confidence.value}]")
            for link in links
        ]
        if not has_l1:
            print("note: txs_l1.csv missing, only S1 links evaluated", file=sys.stderr)
    _write_json(out / "detect_summary.json", {"counts": counts, "scenarios": [s.value for s in scenarios or []]})
    _echo_config(out, args)
    sections: list[Section] = [("findings", ("detector", "count"), sorted(counts.items()))]
    if table:
        sections.append(("details", ("kind", "accounts", "related"), table))
    return (EXIT_FINDINGS if any(counts.values()) else EXIT_OK), sections


def cmd_report(args: argparse.Namespace, out: Path) -> tuple[int, list[Section]]:
    if args.top < 1:
        raise UsageError("--top must be >= 1")
    ds = _load(args.paths).dataset
    holds = holding_relation(ds)
    ties = classify_ties(holds)
    sections: list[Section] = []
    unavailable = []
    report: dict[str, Any] = {}

    profiled = any(a.profile is not None for a in ds.accounts)
    top = top_holders(ds, k=args.top) if profiled else []
    if profiled:
        hist = token_distribution(ds)
        rows = [(label, c, round(hist.fractions[label], 6)) for label, c in zip(hist.labels, hist.counts)]
        _write_csv(out / "token_distribution.csv", ("holding_count", "users", "fraction"), rows)
        sections.append(("token distribution", ("holding_count", "users", "fraction"), rows))

        rows = [
            (i + 1, a.address, a.profile.twitter_username or "", a.profile.holder_count, a.profile.holding_count)
            for i, a in enumerate(top)
        ]
        _write_csv(out / "top_holders.csv", ("rank", "address", "username", "holder_count", "holding_count"), rows)
        sections.append((f"top {args.top} by holder count", ("rank", "address", "username", "holders", "holding"), rows))

        overlap = elite_holder_overlap(holds, [a.address for a in top])
        rows = list(overlap.items())
        _write_csv(out / "elite_overlap.csv", ("elites_held", "accounts"), rows)
        sections.append(("elite overlap", ("elites_held", "accounts"), rows))
    else:
        unavailable = ["token_distribution", "top_holders", "elite_overlap"]

    cohort = cohort_tie_stats(ties, [a.address for a in top])
    tie_rows = [
        ("strong", len(ties.strong_pairs)),
        ("weak", len(ties.weak_edges)),
        ("indirect", len(ties.indirect_pairs)),
        ("strong_within_top", cohort.within),
        ("strong_touching_top", cohort.touching),
    ]
    _write_csv(out / "tie_stats.csv", ("metric", "value"), tie_rows)
    sections.append(("ties", ("metric", "value"), tie_rows))

    timeline = activity_timeline(ds, top or None)
    act_rows = [
        (acct.address, month, n)
        for acct, counts in sorted(timeline.counts.items(), key=lambda kv: kv[0].key)
        for month, n in zip(timeline.months, counts)
    ]
    _write_csv(out / "activity.csv", ("address", "month", "transactions"), act_rows)

    mix = daily_buy_sell_mix(ds)
    mix_rows = [
        (d.date, d.buy_count, d.sell_count, "" if d.buy_fraction is None else round(d.buy_fraction, 6),
         "" if d.mean_price_wei is None else d.mean_price_wei)
        for d in mix
    ]
    _write_csv(out / "daily_mix.csv", ("date", "buys", "sells", "buy_fraction", "mean_value_wei"), mix_rows)

    report["unavailable"] = unavailable
    report["sections"] = [name for name, _, _ in sections] + ["activity", "daily_mix"]
    _write_json(out / "report.json", report)
    _echo_config(out, args)
    if unavailable:
        sections.append(("unavailable (no profiles)", ("section",), [(u,) for u in unavailable]))
    return EXIT_OK, sections


def cmd_synth(args: argparse.Namespace, out: Path) -> tuple[int, list[Section]]:
    if args.spec:
        spec_src: Any = args.spec
    else:
        spec_src = json.loads(resources.files("linklens").joinpath("data/example_spec.json").read_text("utf-8"))
    spec = load_spec(spec_src)
    if args.seed is not None:
        spec = load_spec({**spec.to_dict(), "seed": args.seed})
    dataset, truth = generate(spec)
    write_bundle(dataset, truth, out)
    _echo_config(out, args, spec=spec.to_dict())
    rows = [
        ("accounts", len(dataset.accounts)),
        ("transactions", len(dataset.transactions)),
        ("follows", len(dataset.follows)),
        ("plants", len(truth.plants)),
    ]
    return EXIT_OK, [("synth", ("field", "value"), rows)]


COMMANDS = {
    "ingest": cmd_ingest,
    "entropy": cmd_entropy,
    "detect": cmd_detect,
    "report": cmd_report,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _resolve(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code, sections = COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"linklens: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmptyDatasetError as exc:
        print(f"linklens: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SpecError as exc:
        where = f" (plant {exc.plant_id})" if exc.plant_id else ""
        print(f"linklens: spec error{where}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LinkLensError, FileNotFoundError) as exc:
        print(f"linklens: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    sys.stdout.write(_render(sections, args.format))
    return code


if __name__ == "__main__":
    sys.exit(main())
