"""Command-line front end: register, evaluate, synth, overlay, sweep.

The library is the primary interface; these subcommands are thin
wrappers for running it on files. Configuration comes from an optional
JSON document (see ``PipelineConfig``); any flag given on the command
line overrides its JSON counterpart. Completed runs exit 0 even when
individual pairs fail to register; configuration and IO problems exit
nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .crop import load_rois
from .fitting import RansacConfig, invert_on_grid, save_transform
from .pipeline import (
    PipelineConfig,
    degree_sweep,
    register_pair,
    run_dataset,
    sweep_to_csv,
)
from .raster import load_image, save_rgb
from .synth import SynthConfig, make_dataset
from .vessel import VesselMap, enhance_vesselness
from .warp import render_overlay, warp


def _build_config(args) -> PipelineConfig:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
    overrides = {
        "crop_enabled": args.crop,
        "opening_enabled": args.opening,
        "opening_side": args.opening_side,
        "fit_strategy": args.fit_strategy,
        "poly_degree": args.poly_degree,
        "match_ratio": args.match_ratio,
    }
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    ransac_doc = doc.setdefault("ransac", {})
    if args.ransac_threshold is not None:
        ransac_doc["reproj_threshold"] = args.ransac_threshold
    if args.ransac_seed is not None:
        ransac_doc["seed"] = args.ransac_seed
    return PipelineConfig.from_json_dict(doc)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON; flags below override it")
    crop = p.add_mutually_exclusive_group()
    crop.add_argument("--crop", dest="crop", action="store_true", default=None)
    crop.add_argument("--no-crop", dest="crop", action="store_false")
    open_g = p.add_mutually_exclusive_group()
    open_g.add_argument("--opening", dest="opening", action="store_true", default=None)
    open_g.add_argument("--no-opening", dest="opening", action="store_false")
    p.add_argument("--opening-side", choices=("source", "target"))
    p.add_argument("--fit-strategy", choices=("ransac_only", "poly_only", "ransac_poly"))
    p.add_argument("--poly-degree", type=int)
    p.add_argument("--match-ratio", type=float)
    p.add_argument("--ransac-threshold", type=float)
    p.add_argument("--ransac-seed", type=int)


def _load_map(path, enhance: bool, cfg: PipelineConfig, modality: str) -> VesselMap:
    img = load_image(path)
    if enhance:
        return enhance_vesselness(img, cfg.enhance_scales, modality=modality)
    return VesselMap(img, modality)


def cmd_register(args) -> int:
    cfg = _build_config(args)
    source = _load_map(args.source, args.enhance, cfg, args.source_modality)
    target = _load_map(args.target, args.enhance, cfg, args.target_modality)
    rois = load_rois(args.rois) if args.rois else None
    result = register_pair(source, target, rois, cfg)

    print(json.dumps({"failed": result.failed, **result.diagnostics}, sort_keys=True))
    if result.failed:
        return 0
    if args.out:
        save_transform(args.out, result.transform)
    if args.matches_out:
        result.correspondences.save(args.matches_out)
    if args.overlay:
        h, w = target.grid.shape
        sh, sw = source.grid.shape
        inverse = invert_on_grid(result.transform, sw, sh, n=cfg.poly_degree + 1)
        save_rgb(args.overlay, render_overlay(warp(source.grid, inverse, w, h),
                                              target.grid))
    return 0


def cmd_evaluate(args) -> int:
    cfg = _build_config(args)
    if args.overlays:
        cfg.write_overlays = True
    report = run_dataset(args.manifest, cfg, out_dir=args.out_dir)
    print(report.CSV_HEADER)
    print(report.to_csv_row())
    return 0


def cmd_synth(args) -> int:
    base = SynthConfig(image_size=args.image_size,
                       transform_kind=args.kind,
                       coefficient_scale=args.coefficient_scale,
                       noise_sigma=args.noise_sigma,
                       outlier_fraction=args.outlier_fraction,
                       n_points=args.n_points)
    seeds = range(args.seed_base, args.seed_base + args.n_pairs)
    manifest = make_dataset(args.out_dir, seeds, base,
                            use_planted_matches=args.planted_matches)
    print(manifest)
    return 0


def cmd_overlay(args) -> int:
    from .fitting import load_transform

    source = load_image(args.source)
    target = load_image(args.target)
    t = load_transform(args.transform)
    h, w = target.shape
    inverse = invert_on_grid(t, source.shape[1], source.shape[0])
    save_rgb(args.out, render_overlay(warp(source, inverse, w, h), target))
    print(args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    degrees = [int(d) for d in args.degrees.split(",") if d]
    rows = degree_sweep(args.manifest, cfg, degrees)
    csv = sweep_to_csv(rows)
    if args.csv:
        Path(args.csv).write_text(csv)
    print(csv, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retinareg",
        description="Cross-modal retinal registration on unified vessel maps.")
    sub = parser.add_subparsers(dest="command", required=True)

    modalities = ("octa", "cfp", "wfcfp", "fa", "unknown")
    p = sub.add_parser("register", help="register one source/target pair")
    p.add_argument("--source", required=True, help="source vessel map (PNG/PGM)")
    p.add_argument("--target", required=True, help="target vessel map (PNG/PGM)")
    p.add_argument("--source-modality", choices=modalities, default="unknown",
                   help="with --opening-side source, 'octa' vs 'wfcfp' drives the "
                        "auto opening default")
    p.add_argument("--target-modality", choices=modalities, default="unknown")
    p.add_argument("--rois", help="macula/optic-disc sidecar JSON")
    p.add_argument("--enhance", action="store_true",
                   help="treat inputs as raw grayscale and run the vesselness fallback")
    p.add_argument("--out", help="write the fitted transform JSON here")
    p.add_argument("--matches-out", help="write matched correspondences JSON here")
    p.add_argument("--overlay", help="write an overlay PNG here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("evaluate", help="run a manifest and report metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", help="write report.json / report.csv (and overlays) here")
    p.add_argument("--overlays", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-pairs", type=int, default=10)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--image-size", type=int, default=640)
    p.add_argument("--kind", choices=("homography", "quadratic"), default="quadratic")
    p.add_argument("--coefficient-scale", type=float, default=8.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--n-points", type=int, default=50)
    p.add_argument("--planted-matches", action="store_true",
                   help="manifest entries fit on the planted correspondences")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("overlay", help="render an overlay from a saved transform")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--transform", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("sweep", help="polynomial degree sweep over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--degrees", default="1,2,3,4,5", help="comma-separated degrees")
    p.add_argument("--csv", help="also write the table here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
