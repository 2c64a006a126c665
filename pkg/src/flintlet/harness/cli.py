"""Command-line interface.

Subcommands:
  flintlet gen      generate the synthetic taxi dataset
  flintlet run      run one query in flint or local mode
  flintlet bench    run all queries in both modes and compare
  flintlet explain  print a query's physical plan as JSON

CLI invocations default to the disk store backend so datasets persist
between commands; the config file can switch this. Exit code is non-zero
when a bench/run comparison reports any MISMATCH.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import load_config
from .datagen import generate_dataset
from .queries import compare_results
from .runner import Engine, format_report, report_ok, run_bench, run_query, write_report


def _parse_query(text: str) -> int:
    qid = int(text.lstrip("qQ"))
    if not 0 <= qid <= 6:
        raise argparse.ArgumentTypeError("query must be q0..q6")
    return qid


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flintlet",
        description="Serverless dataflow engine over a simulated cloud substrate",
    )
    parser.add_argument("--config", help="JSON config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate the synthetic dataset")
    gen.add_argument("--records", type=int, default=None)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", default=None, help="output prefix")
    gen.add_argument("--parts", type=int, default=None)

    run = sub.add_parser("run", help="run one query")
    run.add_argument("--query", type=_parse_query, required=True)
    run.add_argument("--mode", choices=["flint", "local"], default="flint")
    run.add_argument("--input", default=None, help="dataset prefix")
    run.add_argument("--partitions", type=int, default=None)
    run.add_argument("--report", default=None, help="write a JSON report here")
    run.add_argument(
        "--check",
        action="store_true",
        help="also run the local oracle and compare",
    )

    bench = sub.add_parser("bench", help="run queries in both modes and compare")
    bench.add_argument("--all", action="store_true", help="run Q0..Q6 (default)")
    bench.add_argument(
        "--query",
        type=_parse_query,
        action="append",
        default=None,
        help="restrict to one query; repeatable",
    )
    bench.add_argument("--report", default=None)

    explain = sub.add_parser("explain", help="print a query's physical plan")
    explain.add_argument("--query", type=_parse_query, required=True)
    explain.add_argument("--input", default=None, help="dataset prefix")
    return parser


def _load(args) -> "Config":
    config = load_config(args.config)
    if args.config is None:
        # CLI default: persist data on disk between invocations.
        config.harness = dataclasses.replace(config.harness, store_backend="disk")
    overrides = {}
    for attr, field_name in (
        ("records", "records"),
        ("seed", "seed"),
        ("parts", "parts"),
        ("partitions", "partitions"),
        ("out", "prefix"),
        ("input", "prefix"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[field_name] = value
    if overrides:
        config.harness = dataclasses.replace(config.harness, **overrides)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = _load(args)
    h = config.harness

    if args.command == "gen":
        engine = Engine.create(config)
        keys = generate_dataset(
            engine.store, h.bucket, h.prefix, h.records, h.seed, h.parts
        )
        print(f"wrote {len(keys)} objects under {h.bucket}/{h.prefix}/")
        return 0

    if args.command == "explain":
        engine = Engine.create(config)
        engine.ensure_dataset()
        print(engine.plan_for(args.query).to_json())
        return 0

    if args.command == "run":
        engine = Engine.create(config)
        run = run_query(args.query, args.mode, config, engine)
        print(
            f"Q{args.query} [{args.mode}] latency={run.latency_s:.3f}s "
            f"cost=${run.cost_usd:.6f}"
        )
        print(json.dumps(run.value, default=str))
        exit_code = 0
        if args.check and args.mode == "flint":
            oracle = run_query(args.query, "local", config, engine)
            diff = compare_results(args.query, run.value, oracle.value)
            print("verdict: OK" if diff is None else f"verdict: MISMATCH ({diff})")
            exit_code = 0 if diff is None else 1
        if args.report:
            with open(args.report, "w", encoding="utf-8") as fh:
                json.dump(
                    {
                        "query": args.query,
                        "mode": args.mode,
                        "latencySeconds": run.latency_s,
                        "costUsd": run.cost_usd,
                        "value": run.value,
                    },
                    fh,
                    indent=2,
                    default=str,
                )
        return exit_code

    # bench
    qids = tuple(args.query) if args.query else tuple(range(7))
    report = run_bench(config, qids=qids)
    print(format_report(report))
    if args.report:
        write_report(report, args.report)
    return 0 if report_ok(report) else 1


if __name__ == "__main__":
    sys.exit(main())
