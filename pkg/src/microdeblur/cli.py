"""Command-line front end: enhance, synthesize, evaluate, dump-config."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .blur_synthesis import LEVELS, make_level_dataset, write_manifest
from .errors import DeblurError, NumericError
from .evaluation import report_table, report_to_csv, run_benchmark
from .imgio import load_image, save_image
from .pipeline import (
    RunConfig,
    apply_overrides,
    dump_config_text,
    enhance,
    parse_config_file,
)
from .tile_propagation import plan_to_json

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_OUTPUT = 3
EXIT_NUMERIC = 4

# (flag, config key, type) for the shared tuning surface
_TUNING_FLAGS = [
    ("--tile-size", "tile_size", int),
    ("--overlap", "overlap", int),
    ("--seeds", "seeds", int),
    ("--rng-seed", "rng_seed", int),
    ("--kernel-size", "kernel_size", int),
    ("--lambda", "lambda", float),
    ("--eta", "eta", float),
    ("--nu", "nu", float),
    ("--eta-decay", "eta_decay", float),
    ("--outer-iters", "outer_iters", int),
    ("--inner-iters", "inner_iters", int),
    ("--pyramid-levels", "pyramid_levels", int),
    ("--beta", "beta", float),
    ("--alpha", "alpha", float),
    ("--threads", "threads", int),
]


def _add_tuning(parser: argparse.ArgumentParser) -> None:
    for flag, key, typ in _TUNING_FLAGS:
        parser.add_argument(flag, dest=f"cfg_{key}", type=typ, default=None, metavar="V")
    parser.add_argument("--config", type=Path, default=None,
                        help="key=value config file (flags take precedence)")
    parser.add_argument("--verbose", action="store_true")


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = apply_overrides(cfg, parse_config_file(args.config))
    overrides = {}
    for _, key, _ in _TUNING_FLAGS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "verbose", False):
        overrides["verbose"] = True
    return apply_overrides(cfg, overrides) if overrides else cfg


def cmd_enhance(args) -> int:
    try:
        cfg = _build_config(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        img = load_image(args.input)
    except (FileNotFoundError, DeblurError, OSError) as exc:
        print(f"error: cannot read input {args.input}: {exc}", file=sys.stderr)
        return EXIT_INPUT

    t0 = time.perf_counter()
    try:
        result = enhance(img, cfg)
    except NumericError as exc:
        print(f"error: numeric failure during enhancement: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    total = time.perf_counter() - t0

    try:
        save_image(args.output, result.image)
    except (DeblurError, OSError) as exc:
        print(f"error: cannot write output {args.output}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT

    if args.dump_plan:
        try:
            Path(args.dump_plan).write_text(plan_to_json(result.plan, args.input))
        except OSError as exc:
            print(f"error: cannot write plan {args.dump_plan}: {exc}", file=sys.stderr)
            return EXIT_OUTPUT

    plan = result.plan
    print(f"tiles: {len(plan.grid.tiles)} ({plan.grid.rows}x{plan.grid.cols}), "
          f"seeds: {len(plan.seeds)}, failed: {len(plan.failed) + len(result.failed_deconv)}")
    for stage, secs in result.stage_seconds.items():
        print(f"  {stage:<12} {secs:8.2f} s")
    print(f"  {'total':<12} {total:8.2f} s")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    level = LEVELS.get(args.level.upper())
    if level is None:
        print(f"error: unknown distortion level {args.level!r} (use I..IV)", file=sys.stderr)
        return EXIT_INPUT
    sharp_dir = Path(args.sharp_dir)
    paths = sorted(
        p for p in sharp_dir.glob("*")
        if p.suffix.lower() in (".png", ".tif", ".tiff")
    ) if sharp_dir.is_dir() else []
    if not paths:
        print(f"error: no readable images in {sharp_dir}", file=sys.stderr)
        return EXIT_INPUT

    images = []
    for p in paths:
        try:
            images.append(load_image(p))
        except (DeblurError, OSError) as exc:
            print(f"error: cannot read {p}: {exc}", file=sys.stderr)
            return EXIT_INPUT

    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        dataset = make_level_dataset(images, level, args.rng_seed,
                                     sigma_in_255_units=args.sigma_in_255_units)
        entries = []
        for path, (blurred, _, specs) in zip(paths, dataset):
            out_path = out_dir / f"{path.stem}_level{level.name}.png"
            save_image(out_path, blurred)
            entries.append({
                "blurred_path": str(out_path),
                "sharp_path": str(path),
                "level": level.name,
                "specs": specs,
                "rng_seed": args.rng_seed,
            })
        manifest = out_dir / "manifest.json"
        write_manifest(manifest, entries)
    except (DeblurError, OSError) as exc:
        print(f"error: cannot write outputs to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    print(f"wrote {len(entries)} blurred images + {manifest}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        cfg = _build_config(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = run_benchmark(args.manifest, cfg)
    except FileNotFoundError:
        print(f"error: manifest not found: {args.manifest}", file=sys.stderr)
        return EXIT_INPUT
    except DeblurError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    csv_path = Path(args.csv) if args.csv else Path(args.manifest).with_suffix(".csv")
    try:
        csv_path.write_text(report_to_csv(report))
    except OSError as exc:
        print(f"error: cannot write {csv_path}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    sys.stdout.write(report_table(report))
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_dump_config(args) -> int:
    try:
        cfg = _build_config(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(dump_config_text(cfg))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microdeblur",
        description="Blind, spatially non-uniform deblurring for microscopy images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="deblur one image")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--dump-plan", type=Path, default=None, metavar="JSON",
                   help="write the tile plan sidecar")
    _add_tuning(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("synthesize", help="make a blurred dataset from sharp images")
    p.add_argument("sharp_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--level", default="I", help="distortion level I..IV")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--sigma-in-255-units", action="store_true",
                   help="divide drawn blur widths by 255 (fidelity experiments)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="run the PSNR benchmark over a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--csv", type=Path, default=None)
    _add_tuning(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("dump-config", help="print the effective configuration")
    _add_tuning(p)
    p.set_defaults(func=cmd_dump_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
