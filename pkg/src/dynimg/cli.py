"""Command-line entry point: ``dynimg <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dimg, fusion, gestalt, pipeline
from .errors import DataError
from .frame_io import ManifestEntry, load_manifest
from .pipeline import EvalReport, PipelineConfig
from .rank_pooling import normalize_image
from .synth import SynthConfig, synth_generate

log = logging.getLogger("dynimg")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _pipeline_flags(p):
    p.add_argument("--config", type=Path, help="JSON file with PipelineConfig overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--exact", action="store_true", default=None, help="use the exact rank pooling solver")
    p.add_argument("--pooling-input", choices=["raw", "averaged"])
    p.add_argument("--tau-b", type=float)
    p.add_argument("--delta", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--no-prune", action="store_true", default=None)
    p.add_argument("--mask-rgb-with-depth", action="store_true", default=None)
    p.add_argument("--streams", choices=["rgb+depth", "rgb", "depth"])
    p.add_argument("--split", type=float)
    p.add_argument("--workers", type=int)


def _manifest_flags(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--manifest", type=Path)
    g.add_argument("--msr-dir", type=Path,
                   help="directory of pre-extracted MSR Action 3D frames with a manifest.json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynimg", description="RGB-D dynamic-image activity recognition")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic RGB-D dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--class-names", nargs="+")
    p.add_argument("--videos-per-class", type=int, default=20)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--noise-blobs", type=int, default=6)
    p.add_argument("--no-distractor", action="store_true")
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("extract", help="dynamic images of one RGB-D video")
    p.add_argument("--rgb-dir", type=Path, required=True)
    p.add_argument("--depth-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _pipeline_flags(p)

    p = sub.add_parser("prune", help="a-contrario pruning of a .dimg file")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mask-with", type=Path, help="depth .dimg whose kept components mask the input")
    p.add_argument("--preview", type=Path)
    p.add_argument("--report", type=Path, help="write the threshold sweep as JSON")
    p.add_argument("--tau-b", type=float, default=0.05)
    p.add_argument("--delta", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=1.0)

    p = sub.add_parser("pipeline", help="full extract/prune/train/evaluate run")
    _manifest_flags(p)
    p.add_argument("--out", type=Path, required=True)
    _pipeline_flags(p)

    p = sub.add_parser("train", help="train the fusion head on the train split")
    _manifest_flags(p)
    p.add_argument("--out", type=Path, required=True, help="model JSON path")
    _pipeline_flags(p)

    p = sub.add_parser("eval", help="evaluate a trained model on its held-out videos")
    _manifest_flags(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report JSON path")

    p = sub.add_parser("report", help="print an EvalReport as a confusion table")
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--out", type=Path)
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None) is not None:
        try:
            overrides = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"bad config file {args.config}: {exc}") from exc
        cfg = cfg.merged(overrides)
    flags = {
        "seed": args.seed,
        "pooling": "exact" if args.exact else None,
        "pooling_input": args.pooling_input,
        "tau_b": args.tau_b,
        "delta": args.delta,
        "epsilon": args.epsilon,
        "prune": False if args.no_prune else None,
        "mask_rgb_with_depth": args.mask_rgb_with_depth,
        "streams": args.streams,
        "split": args.split,
        "workers": args.workers,
    }
    cfg = cfg.merged({k: v for k, v in flags.items() if v is not None})
    log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    return cfg


def _manifest(args):
    if args.manifest is not None:
        return load_manifest(args.manifest)
    return load_manifest(args.msr_dir / "manifest.json")


def cmd_synth(args):
    cfg = SynthConfig(num_classes=args.classes, videos_per_class=args.videos_per_class,
                      height=args.height, width=args.width, frames=args.frames,
                      noise_blobs=args.noise_blobs, distractor=not args.no_distractor,
                      seed=args.seed, classes=tuple(args.class_names) if args.class_names else None)
    log.info("resolved config: %s", cfg)
    manifest = synth_generate(cfg, args.out)
    print(f"wrote {len(manifest)} videos to {args.out / 'manifest.json'}")


def cmd_extract(args):
    cfg = resolve_config(args)
    entry = ManifestEntry("video", "", args.rgb_dir, args.depth_dir)
    pipeline.run_extract(entry, cfg, args.out, stem="")
    print(f"wrote rgb.dimg, depth.dimg and previews to {args.out}")


def cmd_prune(args):
    log.info("resolved config: %s", json.dumps(
        {"tau_b": args.tau_b, "delta": args.delta, "epsilon": args.epsilon,
         "mask_with": str(args.mask_with) if args.mask_with else None}))
    img = normalize_image(dimg.read_dimg(args.input))
    if args.mask_with is not None:
        ref = normalize_image(dimg.read_dimg(args.mask_with))
        if ref.values.shape[:2] != img.values.shape[:2]:
            raise DataError("mask image size differs from input")
        _, cmap, sweep = gestalt.prune_detailed(ref, args.tau_b, args.delta, args.epsilon)
        keep = gestalt.kept_mask(cmap, sweep)
        out = pipeline.with_values(img, np.where(keep[:, :, None], img.values, img.rest_level))
    else:
        out, cmap, sweep = gestalt.prune_detailed(img, args.tau_b, args.delta, args.epsilon)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    dimg.write_dimg(out, args.out)
    if args.preview:
        dimg.save_preview(out, args.preview)
    if args.report:
        args.report.write_text(gestalt.sweep_report(sweep, cmap, args.delta, args.epsilon) + "\n")
    selected = sweep.selected if sweep is not None else None
    print(f"components: {cmap.N}, selected threshold: {selected}")


def cmd_pipeline(args):
    cfg = resolve_config(args)
    report = pipeline.run_pipeline(_manifest(args), cfg, args.out)
    print(report.table(), end="")


def cmd_train(args):
    cfg = resolve_config(args)
    manifest = _manifest(args)
    pipeline.check_manifest(manifest)
    E_rgb, E_depth, y, names = pipeline.extract_features(manifest, cfg)
    X = pipeline.stream_matrix(E_rgb, E_depth, cfg.streams)
    train_idx, test_idx = pipeline.split_for(manifest, cfg)
    params, losses = fusion.train(X[train_idx], y[train_idx], cfg.train, len(names))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    pipeline.save_model(params, cfg, args.out, names, [manifest.entries[i].video_id for i in test_idx])
    print(f"trained on {len(train_idx)} videos, final loss {losses[-1]:.6f}")


def cmd_eval(args):
    manifest = _manifest(args)
    params, _, names = fusion.load_model(args.model)
    data = json.loads(args.model.read_text())
    cfg = PipelineConfig.from_dict(data.get("pipeline_config", {}))
    log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    names = names or manifest.labels
    test_ids = set(data.get("test_ids") or [e.video_id for e in manifest.entries])
    entries = [e for e in manifest.entries if e.video_id in test_ids]
    if not entries:
        raise DataError("no evaluation videos found in manifest")
    unknown = {e.label for e in entries} - set(names)
    if unknown:
        raise DataError(f"labels unknown to the model: {sorted(unknown)}")
    feats = [pipeline.video_features(e, cfg) for e in entries]
    X = pipeline.stream_matrix(np.stack([f[0] for f in feats]), np.stack([f[1] for f in feats]), cfg.streams)
    y = np.array([names.index(e.label) for e in entries])
    pred = fusion.predict_batch(params, X)
    report = EvalReport(list(names), pipeline.confusion_matrix(y, pred, len(names)), cfg.to_dict())
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(report.to_json())
    print(report.table(), end="")


def cmd_report(args):
    try:
        report = EvalReport.from_dict(json.loads(args.report.read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"bad report {args.report}: {exc}") from exc
    text = report.table()
    if args.out:
        args.out.write_text(text)
    print(text, end="")


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "prune": cmd_prune,
    "pipeline": cmd_pipeline,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (ValueError, TypeError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
