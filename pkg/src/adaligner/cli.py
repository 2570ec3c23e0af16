"""Command-line entry point: ``adaligner {generate,train,sweep,eval,gradcheck}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import formats, kernels
from .config import RunConfig, load_config
from .data import write_tag
from .errors import AdalignerError
from .gradcheck import run_gradcheck
from .runs import build_dataset, execute, sweep
from .trainer import TrainingData, eval_rng, evaluate

log = logging.getLogger("adaligner")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def parse_seeds(text: str) -> list[int]:
    """``"0,1,2"`` or ``"0-9"`` or a mix like ``"0-3,7"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no seeds given")
    return out


def _seeds_arg(text: str) -> list[int]:
    try:
        return parse_seeds(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def run_config(args) -> RunConfig:
    rc = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "noise_rate", None) is not None:
        updates["noise_rate"] = args.noise_rate
    if getattr(args, "fixed_theta", None) is not None:
        updates["fixed_theta_value"] = args.fixed_theta
        updates["mode"] = "fixed_theta"
    if getattr(args, "mode", None) is not None:
        updates["mode"] = args.mode
    rc = rc.with_updates(**updates)
    rc.validate()
    return rc


def cmd_generate(args) -> int:
    rc = run_config(args)
    tag = build_dataset(rc)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_tag(tag, out)
    print(f"nodes: {tag.n_nodes}")
    print(f"edges: {len(tag.edges)}")
    print(f"classes: {tag.n_classes}")
    print(f"train: {tag.train.size}")
    print(f"noisy: {int(tag.noise_mask.sum())}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    rc = run_config(args)
    out = Path(args.out or rc.output_dir)
    res = execute(rc, out)
    fe = res.artifacts.final_eval
    print(f"run {out}: accuracy {fe['accuracy']:.4f} best epoch {res.artifacts.best_epoch} "
          f"steps {len(res.artifacts.records)} backend {kernels.BACKEND}")
    if not res.passed:
        print(f"validation failed, see {out / 'validation.json'}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_sweep(args) -> int:
    rc = run_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise AdalignerError("--values is empty")
    out = Path(args.out or rc.output_dir)
    rows = sweep(rc, args.axis, values, args.seeds, out, jobs=args.jobs)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    failed = [r for r in rows if not r["validation_passed"]]
    if failed:
        print(f"{len(failed)} runs failed validation", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = run_config(args)
    data = TrainingData(build_dataset(rc))
    params = formats.read_checkpoint(args.checkpoint)
    metrics = evaluate(params, data, args.split, eval_rng(rc.seed))
    if args.out:
        formats.write_eval(metrics, args.out, rc.config_hash(), rc.seed, split=args.split,
                           checkpoint=str(args.checkpoint))
    print(json.dumps({k: metrics[k] for k in ("accuracy", "macro_f1", "link_auc")}, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(args.seeds, h=args.h, mode=args.mode or "full")
    worst = 0.0
    for r in results:
        print(f"seed {r.seed}: max rel error {r.max_rel_error:.3e} ({r.seconds:.2f}s)")
        worst = max(worst, r.max_rel_error)
    ok = worst < args.tol
    print(f"{'PASS' if ok else 'FAIL'} worst {worst:.3e} tol {args.tol:g}")
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaligner", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--noise-rate", type=float)
        sp.add_argument("--mode", choices=("full", "clip_only", "no_assessment", "no_filter", "fixed_theta"))
        sp.add_argument("--fixed-theta", type=float, help="pin theta; implies --mode fixed_theta")

    g = sub.add_parser("generate", help="write a synthetic dataset file")
    common(g, "dataset file to write")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one run into a directory")
    common(t, "run directory (default: output_dir from the config)")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="train a grid of axis values x seeds")
    common(s, "sweep directory (default: output_dir from the config)")
    s.add_argument("--axis", required=True, help="config key, or fixed_theta")
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--seeds", type=_seeds_arg, default=[0], help="e.g. 0-9 or 0,3,5")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e, "write metrics json here")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check on tiny instances")
    c.add_argument("--seeds", type=_seeds_arg, default=list(range(10)))
    c.add_argument("--h", type=float, default=1e-4)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--mode", choices=("full", "clip_only", "no_assessment", "no_filter", "fixed_theta"))
    c.set_defaults(func=cmd_gradcheck)
    return p


def setup_logging() -> None:
    level = os.environ.get("ADALIGNER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate" and not args.out:
        parser.error("generate requires --out")
    try:
        return args.func(args)
    except (AdalignerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
