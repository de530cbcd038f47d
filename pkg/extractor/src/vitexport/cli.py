"""Command-line interface for feature export and dataset augmentation."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ImageDecodeError, JobError, MissingMask, ModelLoadError
from .extract import ExtractionJob, extract
from .synca import SyncaConfig, make_synca

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _parse_layers(text: str) -> tuple:
    try:
        return tuple(int(tok) for tok in text.replace(",", " ").split())
    except ValueError:
        raise JobError(f"cannot parse layer list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitexport",
        description="Export transformer patch tokens to CDGF feature files.")
    sub = parser.add_subparsers(dest="command", required=True)

    ext = sub.add_parser("extract", help="export one dataset class to a CDGF file")
    ext.add_argument("--dataset", type=Path, required=True,
                     help="dataset root in the standard class/test layout")
    ext.add_argument("--class-name", required=True)
    ext.add_argument("--backbone", required=True)
    ext.add_argument("--output", type=Path, required=True)
    ext.add_argument("--resize", type=int, default=518)
    ext.add_argument("--layers", default="6,12,18,24",
                     help="comma-separated one-based block indices")
    ext.add_argument("--split", default="test")
    ext.add_argument("--seed", type=int, default=0)

    syn = sub.add_parser("synca", help="add transformed duplicates of one anomaly")
    syn.add_argument("--dataset", type=Path, required=True)
    syn.add_argument("--class-name", required=True)
    syn.add_argument("--source", type=Path, required=True,
                     help="path of the anomalous test image to duplicate")
    syn.add_argument("--fraction", type=float, default=0.15)
    syn.add_argument("--rotation", type=float, default=15.0)
    syn.add_argument("--translate", type=float, default=0.025)
    syn.add_argument("--jitter", type=float, default=0.10)
    syn.add_argument("--noise-sigma", type=float, default=7.5)
    syn.add_argument("--seed", type=int, default=0)
    return parser


def _run_extract(args) -> int:
    job = ExtractionJob(dataset=args.dataset, class_name=args.class_name,
                        backbone=args.backbone, output=args.output,
                        resize=args.resize, layers=_parse_layers(args.layers),
                        split=args.split, seed=args.seed)
    path = extract(job)
    print(f"wrote {path}")
    return EXIT_OK


def _run_synca(args) -> int:
    cfg = SyncaConfig(rotation_deg=args.rotation, translate_frac=args.translate,
                      jitter_frac=args.jitter, noise_sigma=args.noise_sigma,
                      fraction=args.fraction, seed=args.seed)
    written = make_synca(args.dataset, args.class_name, args.source, cfg)
    print(f"wrote {len(written)} duplicates")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            return _run_extract(args)
        return _run_synca(args)
    except (JobError, ModelLoadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ImageDecodeError, MissingMask, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
