"""``fedkt`` command line: run experiments, generate toy data, audit vote streams."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import privacy
from ..domain import make_rng
from .data import SYNTHETIC_TASKS, DataFormatError, fetch_adult, save_dataset
from .experiment import ExperimentConfig, StageError, parse_sweep, run_experiment, run_sweep, write_report

log = logging.getLogger("fedkt")


def _cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.from_file(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: bad config {args.config}: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = cfg.with_value("seed", args.seed)
    out = None
    if args.out:
        name = f"sweep_{args.sweep.partition('=')[0]}.json" if args.sweep else "report.json"
        out = Path(args.out) / name
    elif cfg.out:
        out = Path(cfg.out)
    try:
        if args.sweep:
            key, values = parse_sweep(args.sweep)
            report = run_sweep(cfg, key, values, write=False)
        else:
            report = run_experiment(cfg, write=False)
    except StageError as exc:
        print(json.dumps({"error": exc.to_dict()}), file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if out is not None:
        write_report(report, out)
        log.info("report written to %s", out)
    print(json.dumps({"accuracy": report["accuracy"], "out": str(out) if out else None}))
    return 0


def _cmd_gen(args) -> int:
    kw = {"n": args.n}
    if args.task == "blobs":
        kw.update(num_classes=args.classes, dim=args.dim)
    data = SYNTHETIC_TASKS[args.task](rng=make_rng(args.seed), **kw)
    save_dataset(data, args.out, args.format)
    print(f"wrote {len(data)} rows to {args.out}")
    return 0


def _read_votes(path) -> np.ndarray:
    """One histogram per row; blank lines and ``#`` comments skipped."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.replace(";", ",").split(",")]
            except ValueError:
                raise DataFormatError(f"non-numeric vote count in {line!r}", lineno) from None
            if any(v < 0 or not float(v).is_integer() for v in row):
                raise DataFormatError("vote counts must be non-negative integers", lineno)
            if rows and len(row) != len(rows[0]):
                raise DataFormatError(f"expected {len(rows[0])} counts, found {len(row)}", lineno)
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no vote histograms")
    return np.array(rows)


def _cmd_accountant(args) -> int:
    try:
        votes = _read_votes(args.votes)
    except (OSError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if votes.shape[1] < 2:
        print("error: histograms need at least two classes", file=sys.stderr)
        return 2
    if args.level == "l1":
        report = privacy.account_l1(votes, args.s, args.gamma, args.delta, args.max_order)
        per_query = privacy.pure_dp_epsilon_l1(args.s, args.gamma)
    else:
        report = privacy.account_l2([votes], args.gamma, args.delta, t=args.t, max_order=args.max_order)
        per_query = 2.0 * args.gamma
    out = report.to_dict()
    out["advanced_composition_epsilon"] = privacy.advanced_composition_reference(per_query, len(votes), args.delta)
    gaps = np.sort(votes, axis=1)
    out["mean_gap"] = float(np.mean(gaps[:, -1] - gaps[:, -2]))
    print(json.dumps(out, indent=2))
    return 0


def _cmd_fetch(args) -> int:
    try:
        path = fetch_adult(args.dest)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedkt", description="One-shot federated learning simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment or a sweep from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--sweep", help="key=v1,v2,... over query_fraction, public_fraction, s, t, gamma, n, beta")
    run.add_argument("--out", help="directory for the JSON report (overrides the config's out)")
    run.set_defaults(func=_cmd_run)

    gen = sub.add_parser("gen", help="write a synthetic task to disk")
    gen.add_argument("--task", choices=sorted(SYNTHETIC_TASKS), required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--classes", type=int, default=2)
    gen.add_argument("--dim", type=int, default=2)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--format", choices=["csv", "libsvm"], default="csv")
    gen.set_defaults(func=_cmd_gen)

    acc = sub.add_parser("accountant", help="privacy ledger over a CSV of clean vote histograms")
    acc.add_argument("--votes", required=True)
    acc.add_argument("--gamma", type=float, required=True)
    acc.add_argument("--level", choices=["l1", "l2"], required=True)
    acc.add_argument("--s", type=int, default=2)
    acc.add_argument("--t", type=int, default=5)
    acc.add_argument("--delta", type=float, default=1e-5)
    acc.add_argument("--max-order", type=int, default=privacy.DEFAULT_MAX_ORDER)
    acc.set_defaults(func=_cmd_accountant)

    fetch = sub.add_parser("fetch-adult", help="download the UCI Adult training file")
    fetch.add_argument("--dest", default="data")
    fetch.set_defaults(func=_cmd_fetch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "gamma", 1.0) is not None and getattr(args, "gamma", 1.0) <= 0:
        print("error: gamma must be > 0", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
