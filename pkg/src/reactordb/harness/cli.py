"""``reactordb-bench``: run SmartMart scenarios and write CSV."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from ..deployment import PRESETS, parse_deployment
from ..errors import ConfigurationError
from ..smartmart import LoadParams
from .driver import RNG_NAME, PointResult
from .report import emit_csv
from .scenarios import SCENARIOS, ratio_summary, run_scenario
from .workload import parse_workload

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reactordb-bench", description=__doc__)
    p.add_argument("--scenario", choices=SCENARIOS, default="single")
    p.add_argument("--deployment", default="both",
                   help="sync, async, both, or a deployment file path")
    p.add_argument("--workload", help="workload file with a [workload] section; flags override it")
    p.add_argument("--workers", type=int)
    p.add_argument("--order-size", type=int)
    p.add_argument("--sections", type=int, help="store sections spanned per order")
    p.add_argument("--scan-window", type=int)
    p.add_argument("--zipf", type=float, help="zipfian constant for section choice (default uniform)")
    p.add_argument("--delay-ms", type=float)
    p.add_argument("--section-choice", choices=("fixed", "all"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--epoch-secs", type=float)
    p.add_argument("--warmup", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-history", action="store_true", help="checkout does not append purchase history")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--load-seed", type=int, default=42)
    p.add_argument("--out", default="-", help="CSV path (default stdout)")
    p.add_argument("--verify", action="store_true", help="replay every point serially and check it")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        flags = {"workers": args.workers, "order_size": args.order_size, "sections": args.sections,
                 "scan_window": args.scan_window, "zipf": args.zipf, "delay_ms": args.delay_ms,
                 "section_choice": args.section_choice, "epochs": args.epochs,
                 "epoch_seconds": args.epoch_secs, "warmup_epochs": args.warmup, "seed": args.seed,
                 "record_history": False if args.no_history else None}
        make = LoadParams.paper if args.scale == "paper" else LoadParams.desk
        params = make(seed=args.load_seed)
        if args.workload is None and args.sections is None:
            flags["sections"] = params.sections
        base = parse_workload(args.workload, **flags)
        if args.deployment == "both":
            deployments: list = ["sync", "async"]
        elif args.deployment in PRESETS:
            deployments = [args.deployment]
        elif os.path.exists(args.deployment):
            deployments = [parse_deployment(args.deployment)]
        else:
            raise ConfigurationError(f"--deployment: no preset or file named {args.deployment!r}")
    except ConfigurationError as exc:
        print(f"reactordb-bench: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    print(f"# scenario={args.scenario} scale={args.scale} rng={RNG_NAME}", file=sys.stderr)

    def progress(label: str, res: PointResult) -> None:
        w, t = res.workload, res.total
        print(f"# {label:11s} W={w.workers} N={w.order_size} k={w.sections} window={w.scan_window} "
              f"zipf={w.zipf} delay={w.delay_ms}: {t.throughput:.1f} ips, "
              f"{t.mean_latency_us:.0f} us, abort rate {t.abort_rate:.3f}", file=sys.stderr)

    started = time.time()
    try:
        rows, failures = run_scenario(args.scenario, deployments, base, params, verify=args.verify,
                                      on_point=progress)
    except ConfigurationError as exc:
        print(f"reactordb-bench: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emit_csv(rows, args.out, metadata={
            "scenario": args.scenario, "scale": args.scale, "load_seed": args.load_seed,
            "warmup_epochs_discarded": base.warmup_epochs, "epoch_seconds": base.epoch_seconds,
            "rng": RNG_NAME, "cpu_count": os.cpu_count(), "wall_seconds": round(time.time() - started, 1)})
    except OSError as exc:
        print(f"reactordb-bench: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    for line in ratio_summary(rows):
        print(f"# {line}", file=sys.stderr)
    if failures:
        for f in failures:
            print(f, file=sys.stderr)
        return EXIT_VERIFY
    if args.verify:
        print("# serializability: all points PASS", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
