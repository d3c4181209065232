"""Command-line entry point: ``fairstock {simulate,sweep,verify,eg,lower-bound}``."""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .analysis import epoch_lower_bound
from .eg import EgInstance, eg_instance_from_config, load_food_bank, solve_fluid_eg
from .harness import ExperimentConfig, reference_run, run_sweep, summary_row, write_summaries, write_trace
from .verify import report, run_suite


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise SystemExit("--config is required for this subcommand")
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["root_seed"] = args.seed
    if args.horizon is not None:
        changes["T"] = args.horizon
    if args.reps is not None:
        changes["replications"] = args.reps
    if getattr(args, "trace", False):
        changes["trace"] = True
    return replace(cfg, **changes) if changes else cfg


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _trace_path(out: str | None) -> Path:
    if out is None:
        return Path("trace.csv")
    p = Path(out)
    return p.with_name(p.stem + ".trace.csv")


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    M = cfg.M_grid[0] if args.M is None else args.M
    delta = cfg.delta_grid[0] if args.delta is None else args.delta
    out = args.out or cfg.output_path
    fmt = args.format or cfg.output_format
    reps = args.reps if args.reps is not None else 1
    rows, trace_rows = [], []
    for rep in range(reps):
        summary, trace = reference_run(cfg, M, delta, rep, trace=cfg.trace)
        rows.append(summary_row(cfg, M, delta, rep, summary))
        trace_rows.extend(dict(r, replication=rep) if reps > 1 else r for r in trace)
    with _sink(out) as fh:
        write_summaries(rows, fh, fmt)
    if cfg.trace:
        path = _trace_path(out)
        write_trace(trace_rows, path)
        print(f"trace written to {path}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    result = run_sweep(cfg, parallel=args.parallel)
    out = args.out or cfg.output_path
    fmt = args.format or cfg.output_format
    if out is None:
        if fmt == "json":
            print(result.to_json())
        else:
            result.to_csv(sys.stdout)
    else:
        result.write(out, fmt)
    for fail in result.failures:
        print(f"skipped M={fail['M']} delta={fail['delta']}: {fail['error']}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    seed = 0 if args.seed is None else args.seed
    doc = report(run_suite(seed))
    with _sink(args.out) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    for chk in doc["checks"]:
        status = "PASS" if chk["passed"] else "FAIL"
        print(f"{status} {chk['name']} residual={chk['residual']:.3g}", file=sys.stderr)
    return 0 if doc["passed"] else 1


def _eg_instance(path: str | None) -> EgInstance:
    if path is None:
        return load_food_bank()[0]
    data = json.loads(Path(path).read_text())
    if "env" in data:
        return ExperimentConfig.from_dict(data).eg_instance()
    return eg_instance_from_config(data)


def cmd_eg(args) -> int:
    inst = _eg_instance(args.config)
    sol = solve_fluid_eg(inst)
    doc = {
        "allocations": sol.allocations.tolist(),
        "dual_prices": sol.dual_prices.tolist(),
        "kkt_residual": sol.kkt_residual,
        "iterations": sol.iterations,
        "objective": inst.objective(sol.allocations),
    }
    if inst.type_names is not None:
        doc["type_names"] = list(inst.type_names)
    if inst.resource_names is not None:
        doc["resource_names"] = list(inst.resource_names)
    with _sink(args.out) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_lower_bound(args) -> int:
    res = epoch_lower_bound(args.a, args.delta, args.M)
    doc = asdict(res)
    doc = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in doc.items()}
    doc["delta_eff_lower_bound"] = res.W_lb + res.V_lb
    with _sink(args.out) as fh:
        json.dump(doc, fh, indent=2, default=lambda o: o.item() if isinstance(o, np.generic) else str(o))
        fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairstock", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="root seed, overrides the config")
        p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("simulate", help="single run, optional per-round trace")
    common(p)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--trace", action="store_true", help="also write a per-round trace CSV")
    p.add_argument("--horizon", type=int, help="rounds T")
    p.add_argument("--reps", type=int, help="number of replications (default 1)")
    p.add_argument("--M", type=float, help="capacity (default: first grid value)")
    p.add_argument("--delta", type=float, help="Delta (default: first grid value)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="grid experiment to CSV or JSON")
    common(p)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.add_argument("--horizon", type=int)
    p.add_argument("--reps", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="oracle suite, JSON report")
    common(p, config=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eg", help="solve a fluid Eisenberg-Gale instance")
    p.add_argument("--config", help="EG instance or multi-resource experiment config (default: food bank)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eg)

    p = sub.add_parser("lower-bound", help="per-epoch inefficiency lower bound for a static allocation")
    p.add_argument("--a", type=float, required=True, help="static allocation per unit of demand")
    p.add_argument("--delta", type=float, required=True, help="envy budget")
    p.add_argument("--M", type=float, required=True, help="capacity")
    p.add_argument("--out")
    p.set_defaults(func=cmd_lower_bound)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
