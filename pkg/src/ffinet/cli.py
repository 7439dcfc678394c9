"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import warnings
from pathlib import Path

from .config import PRESETS, ConfigError, dump_config, load_config

logger = logging.getLogger("ffinet")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _data_root(args) -> Path:
    root = args.data or os.environ.get("FFINET_DATA_DIR")
    if not root:
        raise UsageError("no dataset given: pass --data or set FFINET_DATA_DIR")
    return Path(root)


def _config(args) -> dict:
    return load_config(args.config, args.set, args.preset)


def _parse_mix(items) -> dict[str, float] | None:
    if not items:
        return None
    mix = {}
    for item in ",".join(items).split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise UsageError(f"--mix entries must be archetype=fraction, got {item!r}")
        k, v = item.split("=", 1)
        mix[k.strip()] = float(v)
    return mix


def _read_split(root: Path, split: str):
    from .io import read_dataset
    if not root.exists():
        raise FileNotFoundError(f"dataset not found: {root}")
    path = root / split
    if path.is_dir():
        return read_dataset(path)
    if any(root.glob("*.json")):
        return read_dataset(root)
    raise FileNotFoundError(f"dataset split not found: {path}")


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    from .io import SPLITS, write_dataset
    from .synthetic import ARCHETYPES, generate_dataset

    out = Path(args.out or os.environ.get("FFINET_DATA_DIR") or "data")
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise RuntimeError(f"output directory {out} is not empty (use --force to overwrite)")
        for split in SPLITS:
            shutil.rmtree(out / split, ignore_errors=True)
    mix = _parse_mix(args.mix)
    if mix is not None:
        unknown = set(mix) - set(ARCHETYPES)
        if unknown:
            raise UsageError(f"unknown archetype(s) {sorted(unknown)}; choose from {list(ARCHETYPES)}")
        if abs(sum(mix.values()) - 1.0) > 1e-9:
            raise UsageError("--mix fractions must sum to 1")
    proportions = tuple(float(x) for x in args.split.split(","))
    if len(proportions) != 3 or abs(sum(proportions) - 1.0) > 1e-9:
        raise UsageError("--split needs three fractions summing to 1")
    if args.n == 0:
        warnings.warn("--n 0: writing empty splits", UserWarning, stacklevel=1)
        logger.warning("--n 0: writing empty splits")
    scenes = generate_dataset(args.n, mix, seed=args.seed, agents_range=(args.min_agents, args.max_agents))
    counts = write_dataset(scenes, out, seed=args.seed, proportions=proportions)
    print(json.dumps({"root": str(out), "counts": counts}))
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import train

    cfg = _config(args)
    root = _data_root(args)
    train_scenes = _read_split(root, "train")
    val_scenes = _read_split(root, "val") if (root / "val").is_dir() else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    result = train(cfg, train_scenes, val_scenes or None, out_dir=out, progress=True)
    print(json.dumps({"final": str(result.final_dir), "best": str(result.best_dir) if result.best_dir else None,
                      "best_epoch": result.best_epoch}))
    return EXIT_OK


def _load(path):
    from .training import load_checkpoint
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def cmd_eval(args) -> int:
    from .training import evaluate

    model, _ = _load(args.checkpoint)
    scenes = _read_split(_data_root(args), args.split)
    if not scenes:
        raise RuntimeError(f"no scenes in split {args.split!r} of {_data_root(args)}")
    report = evaluate(model, scenes, batch_size=args.batch_size).report
    text = report.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(report.table())
    return EXIT_OK


def cmd_predict(args) -> int:
    from .batching import batch_scenes
    from .io import read_scene
    from .plotting import write_predictions

    model, _ = _load(args.checkpoint)
    src = Path(args.scenes) if args.scenes else _data_root(args)
    scenes = [read_scene(src)] if src.is_file() else _read_split(src, args.split)
    preds = []
    for batch in batch_scenes(scenes, args.max_agents, model.cfg, model.dtype):
        preds.extend(model.predict_batch(batch))
    write_predictions(preds, args.out)
    print(json.dumps({"predictions": str(args.out), "scenes": len(preds)}))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .training import GRIDS, TABLE5_GRID, run_ablation

    cfg = _config(args)
    root = _data_root(args)
    train_scenes = _read_split(root, "train")
    eval_scenes = _read_split(root, args.split)
    seeds = [int(s) for s in args.seeds.split(",")]
    if args.grid not in GRIDS:
        raise UsageError(f"unknown grid {args.grid!r}; choose from {sorted(GRIDS)}")
    extra = None
    if args.grid != "table5":
        # reference cells for the future-feedback direction check
        extra = [TABLE5_GRID[2], TABLE5_GRID[4]]
    result = run_ablation(GRIDS[args.grid], train_scenes, eval_scenes, cfg, seeds, extra_rows=extra)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(result.table() + "\n")
    out.with_suffix(".json").write_text(json.dumps(result.to_dict(), indent=2))
    print(result.table())
    return EXIT_OK


def cmd_plot(args) -> int:
    from .io import read_scene
    from .plotting import PlotError, plot_scene, read_predictions

    scene = read_scene(args.scene)
    preds = read_predictions(args.predictions)
    if scene.scene_id not in preds:
        raise PlotError(f"scene id mismatch: scene {scene.scene_id!r} not among prediction ids {sorted(preds)}")
    plot_scene(scene, preds[scene.scene_id], args.out, show_initial=not args.no_initial)
    print(args.out)
    return EXIT_OK


def cmd_model_info(args) -> int:
    from .training import format_model_info, model_info

    info = model_info(_config(args))
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        print(format_model_info(info))
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ffinet", description="Multi-agent motion forecasting with future feedback.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(p):
        p.add_argument("--config", help="flat 'key = value' config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
        p.add_argument("--preset", default="default", choices=sorted(PRESETS))

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", help="output root (default $FFINET_DATA_DIR or ./data)")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mix", action="append", help="archetype=fraction[,...]")
    p.add_argument("--split", default="0.7,0.15,0.15", help="train,val,test fractions")
    p.add_argument("--min-agents", type=int, default=3)
    p.add_argument("--max-agents", type=int, default=6)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data")
    p.add_argument("--out", required=True, help="run directory")
    with_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--split", default="test")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--out", help="MetricReport JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write predictions for scenes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--scenes", help="scene file or dataset directory")
    p.add_argument("--split", default="test")
    p.add_argument("--max-agents", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="run an ablation grid")
    p.add_argument("--preset", dest="grid", default="table5", help="grid: table5, table7, table8, table9")
    p.add_argument("--config-preset", dest="preset", default="default", choices=sorted(PRESETS))
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--data")
    p.add_argument("--split", default="val")
    p.add_argument("--seeds", default="0")
    p.add_argument("--out", required=True, help="table file (a .json twin is written too)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="render a scene with predictions")
    p.add_argument("--scene", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-initial", action="store_true")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("model-info", help="parameter counts and multiply-adds per module")
    with_config(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_model_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"ffinet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # one-line reason, nonzero exit
        print(f"ffinet: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
