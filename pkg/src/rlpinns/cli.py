"""Command-line entry point: run, sweep, validate-derivs, reference-burgers."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .harness import (
    SAMPLERS,
    ConfigError,
    compare,
    emit_results,
    format_summary,
    load_config,
    run_pipeline,
    run_sweep,
    tune_allocator,
)


def parse_seeds(text: str) -> list[int]:
    """'0..4' (inclusive range) or '0,2,5'."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def parse_samplers(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SAMPLERS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown sampler(s) {bad}; valid: {', '.join(SAMPLERS)}")
    return names


def _print(msg):
    print(msg, flush=True)


def cmd_run(args) -> int:
    cfg = load_config(args.config, {"case": args.case, "sampler": args.sampler, "seed": args.seed,
                                    "out_dir": args.out})
    out = cfg.out_dir or "results"
    cfg = dataclasses.replace(cfg, out_dir=out)
    rec = run_pipeline(cfg)
    emit_results([rec], out)
    _print(f"{rec.case} {rec.sampler} seed={rec.seed}: rel_l2={rec.rel_l2:.6g} points_added={rec.points_added} "
           f"sampling={rec.sampling_time_s:.2f}s training={rec.training_time_s:.1f}s -> {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, {"case": args.case, "out_dir": args.out})
    out = cfg.out_dir or "results"
    cfg = dataclasses.replace(cfg, out_dir=out)
    records = run_sweep(cfg, args.samplers, args.seeds, log=_print)
    emit_results(records, out)
    if len(set(r.sampler for r in records)) > 1:
        _print(format_summary(compare(records)))
    return 0


def cmd_validate(args) -> int:
    from .checks import check_jet_derivatives

    report = check_jet_derivatives(n_nets=args.nets, seed=args.seed)
    ok = True
    for order, (worst, tol) in sorted(report.items()):
        status = "ok" if worst <= tol else "FAIL"
        ok &= worst <= tol
        _print(f"order {order}: worst relative error {worst:.3e} (tolerance {tol:.0e}) {status}")
    return 0 if ok else 1


def cmd_reference(args) -> int:
    from .problems import dump_reference_csv, make_problem
    from .training import build_test_set

    spec = make_problem("burgers")
    points, _ = build_test_set(spec, grid=args.grid)
    path = Path(args.out)
    dump_reference_csv(spec, points, path)
    _print(f"wrote {args.grid}x{args.grid} Burgers reference to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlpinns", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one (case, sampler, seed) pipeline run")
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--case")
    r.add_argument("--sampler", choices=SAMPLERS)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory (default: results)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="several samplers and seeds, shared pretraining per seed")
    s.add_argument("--config", help="JSON config file")
    s.add_argument("--case")
    s.add_argument("--samplers", type=parse_samplers, default=list(SAMPLERS))
    s.add_argument("--seeds", type=parse_seeds, default=[0])
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate-derivs", help="compare jet derivatives against finite differences")
    v.add_argument("--nets", type=int, default=200)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("reference-burgers", help="dump the Burgers reference solution on a grid")
    b.add_argument("--grid", type=int, default=201)
    b.add_argument("--out", default="burgers_reference.csv")
    b.set_defaults(func=cmd_reference)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    tune_allocator()
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
