"""Command-line entry points: `microflow run` and `microflow synth`.

Exit codes: 0 success, 2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .facemesh import ValidationError
from .optflow import FlowParams
from .overlay import OverlayStyle
from .pipeline import EMIT_KINDS, MODES, PipelineConfig, run_pipeline
from .synth import (
    DEFAULT_CANVAS,
    DEFAULT_FRAME_SIZE,
    KINDS,
    generate_sequence,
)


def _emit_set(text: str) -> frozenset:
    kinds = frozenset(part.strip() for part in text.split(",") if part.strip())
    unknown = kinds - EMIT_KINDS
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown emit kinds {sorted(unknown)}; choose from {sorted(EMIT_KINDS)}")
    return kinds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microflow",
        description="Measure facial micro-movements on a canonical face canvas "
                    "and overlay them as arrows on the original frames.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the full analysis over a frame directory")
    run_p.add_argument("--frames-dir", required=True, help="directory of frame_%%06d.png/.pgm files")
    run_p.add_argument("--landmarks", required=True, help="landmark-sequence JSON")
    run_p.add_argument("--canonical", required=True, help="canonical-model JSON")
    run_p.add_argument("--out-dir", required=True)
    run_p.add_argument("--mode", choices=MODES, default="reference")
    run_p.add_argument("--grid-step", type=int, default=8, help="arrow lattice spacing (px)")
    run_p.add_argument("--scale", type=float, default=4.0, help="display multiplier on arrows")
    run_p.add_argument("--min-magnitude", type=float, default=0.15,
                       help="smallest |d| (canonical px) drawn as an arrow")
    run_p.add_argument("--min-eig", type=float, default=1e-4,
                       help="conditioning threshold for flow validity")
    run_p.add_argument("--pyramid-levels", type=int, default=3)
    run_p.add_argument("--emit", type=_emit_set, default=EMIT_KINDS,
                       metavar="canonical,flow,overlay,csv",
                       help="comma-separated outputs to write (default all)")

    synth_p = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    synth_p.add_argument("--kind", choices=KINDS, required=True)
    synth_p.add_argument("--out-dir", required=True)
    synth_p.add_argument("--frames", type=int, default=8)
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--frame-size", type=int, nargs=2, default=list(DEFAULT_FRAME_SIZE),
                         metavar=("W", "H"))
    synth_p.add_argument("--canvas", type=int, nargs=2, default=list(DEFAULT_CANVAS),
                         metavar=("W", "H"))
    synth_p.add_argument("--velocity", type=float, nargs=2, default=[3.0, 0.0],
                         metavar=("DX", "DY"), help="rigid translation per frame (px)")
    synth_p.add_argument("--rotation", type=float, default=0.0, help="rigid rotation per frame (deg)")
    synth_p.add_argument("--growth", type=float, default=1.0, help="rigid scale factor per frame")
    synth_p.add_argument("--deform-landmark", type=int, default=None,
                         help="landmark index to deform (default: lattice center)")
    synth_p.add_argument("--deform-offset", type=float, nargs=2, default=[2.0, 0.0],
                         metavar=("DX", "DY"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = PipelineConfig(
                frames_dir=args.frames_dir,
                landmarks_path=args.landmarks,
                canonical_path=args.canonical,
                out_dir=args.out_dir,
                mode=args.mode,
                flow=FlowParams(tau_eig=args.min_eig, pyramid_levels=args.pyramid_levels),
                style=OverlayStyle(grid_step=args.grid_step, scale=args.scale,
                                   min_magnitude=args.min_magnitude),
                emit=args.emit,
            )
            _, summary = run_pipeline(config)
            print(f"processed {summary['frames']} frames, "
                  f"{summary['flow_fields']} flow fields -> {args.out_dir}")
            for warning in summary["warnings"]:
                print(f"warning: {warning}", file=sys.stderr)
        else:
            truth = generate_sequence(
                kind=args.kind, out_dir=args.out_dir, frames=args.frames, seed=args.seed,
                frame_size=tuple(args.frame_size), canvas=tuple(args.canvas),
                velocity=tuple(args.velocity), rotation_deg=args.rotation, scale=args.growth,
                deform_landmark=args.deform_landmark, deform_offset=tuple(args.deform_offset))
            print(f"wrote {truth['frames']}-frame {args.kind} sequence -> {args.out_dir}")
    except (ValidationError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
