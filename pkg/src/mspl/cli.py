"""Command-line entry point: ``mspl {synth,train,eval,sweep}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import dataio
from .config import load_config
from .errors import MsplError

log = logging.getLogger("mspl")


def _config(args):
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None):
        changes["seeds"] = tuple(args.seed)
    if getattr(args, "out", None):
        changes["output_dir"] = Path(args.out)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_synth(args) -> int:
    if args.kind == "anisotropic":
        ds = dataio.synth_anisotropic(args.n_per_class, args.d, args.seed)
    else:
        ds = dataio.synth_generate(args.n_per_class, args.d, args.classes, args.separation, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_csv(ds, out)
    schema_path = out.with_suffix(".schema.json")
    dataio.save_schema(ds.schema, schema_path)
    log.info("wrote %d rows to %s (schema %s)", len(ds), out, schema_path)
    return 0


def cmd_train(args) -> int:
    from .experiment import run_train

    cfg = _config(args)
    agg = run_train(cfg)
    for m, mu, sd, n in agg.rows():
        log.info("%-18s %.4f ± %.4f  (n=%d)", m, mu, sd, n)
    return 0


def cmd_eval(args) -> int:
    from .experiment import run_eval

    cfg = _config(args)
    report = run_eval(cfg, args.checkpoint, args.split)
    if args.report:
        report.save(args.report)
    else:
        json.dump(report.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


def cmd_sweep(args) -> int:
    from .experiment import load_grid, run_sweep

    cfg = _config(args)
    rows = run_sweep(cfg, load_grid(args.grid))
    for r in rows:
        log.info("%2d  %-40s f1 %.4f ± %.4f", r["rank"], r["label"], r["mean_macro_f1"], r["std_macro_f1"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mspl", description="Multi-space prototypical learning for few-shot intrusion detection.")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, action="append", help="run this seed (repeatable); overrides the config list")
        sp.add_argument("--out", help="output directory; overrides the config")
        sp.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    sp = sub.add_parser("synth", help="write a synthetic dataset CSV plus schema sidecar")
    sp.add_argument("--out", required=True, help="CSV path; the schema goes to <stem>.schema.json")
    sp.add_argument("--n-per-class", type=int, default=200)
    sp.add_argument("--d", type=int, default=16)
    sp.add_argument("--classes", type=int, default=3)
    sp.add_argument("--separation", type=float, default=6.0)
    sp.add_argument("--kind", choices=("gaussian", "anisotropic"), default="gaussian")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train every seed, write checkpoints, histories, reports and the aggregate")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on the config's validation or test split")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", choices=("val", "test"), default="val")
    sp.add_argument("--report", help="write the report JSON here instead of stdout")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="train over a grid of metric weights and rank by mean F1")
    common(sp)
    sp.add_argument("--grid", default="default",
                    help="'default' (15 uniform mixtures), 'vertices', or a JSON list of weight objects")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MsplError as e:
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return 1
    except OSError as e:
        print(json.dumps({"error": type(e).__name__, "module": "cli", "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
