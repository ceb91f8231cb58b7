"""Command line entry point: train the operator and export artifacts."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .export import export_fixtures, export_weights
from .model import GridSpec
from .pricing import MarketParams
from .sampling import TrainConfig
from .training import train

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pino-train",
        description="Train the two-asset pricing step operator and export "
                    "weights, fixtures and the loss history.")
    ap.add_argument("--out", type=Path, default=Path("artifacts"),
                    help="output directory (default: artifacts)")
    ap.add_argument("--epochs", type=int, default=2500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid", type=int, default=64,
                    help="training mesh nodes per axis")
    ap.add_argument("--batch", type=int, default=16,
                    help="snapshots per optimisation step")
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--modes", type=int, default=12)
    ap.add_argument("--layers", type=int, default=4)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--warmup", type=int, default=None,
                    help="epochs trained on the value terms alone before "
                         "the residual joins (default: TrainConfig default)")
    ap.add_argument("--pairs", type=int, default=48,
                    help="fixture pairs to export")
    ap.add_argument("--quiet", action="store_true",
                    help="only warnings and errors")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    kwargs = {} if args.warmup is None else {"warmup_epochs": args.warmup}
    cfg = TrainConfig(width=args.width, modes=args.modes, n_layers=args.layers,
                      grid_n=args.grid, epochs=args.epochs,
                      batch_size=args.batch, lr=args.lr, seed=args.seed,
                      **kwargs)
    p = MarketParams.benchmark()
    result = train(cfg, p, args.out)

    grid = GridSpec(cfg.grid_n)
    weights = export_weights(result.model, args.out / "pino_weights.fno1")
    fixtures = export_fixtures(result.model, grid, p,
                               args.out / "pino_fixtures.fnof",
                               n_pairs=args.pairs, seed=cfg.seed + 1,
                               dt_lo=cfg.dt_lo, dt_hi=cfg.dt_hi)
    meta = {
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "validation_rel_l2": result.validation,
        "wall_seconds": result.wall_seconds,
        "weights": weights.name,
        "fixtures": fixtures.name,
        "checkpoints": [c.name for c in result.checkpoint_paths],
    }
    meta_path = args.out / "run_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    log.info("weights %s  fixtures %s  validation rel l2 %.3e",
             weights, fixtures, result.validation)
    return 0


if __name__ == "__main__":
    sys.exit(main())
