"""CLI for the detector adapter; exit codes match the main pipeline
(0 success, 2 validation/detector error, 3 I/O error)."""

from __future__ import annotations

import argparse
import sys

from . import AdapterConfig, AdapterError, extract_landmarks, export_canonical
from .detectors import BACKENDS, DetectorUnavailableError, make_backend


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Run a face-mesh detector over a frame directory and emit "
                    "the landmark-sequence and canonical-model JSON files.")
    parser.add_argument("--frames-dir", required=True)
    parser.add_argument("--out-landmarks", required=True)
    parser.add_argument("--out-canonical", required=True)
    parser.add_argument("--canvas", type=int, nargs=2, default=[512, 512], metavar=("W", "H"))
    parser.add_argument("--min-detection-confidence", type=float, default=0.5)
    parser.add_argument("--backend", choices=sorted(BACKENDS), default="mediapipe")
    parser.add_argument("--marker-grid", type=int, nargs=2, default=[6, 5],
                        metavar=("COLS", "ROWS"), help="marker backend grid layout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = AdapterConfig(frames_dir=args.frames_dir,
                               out_landmarks=args.out_landmarks,
                               out_canonical=args.out_canonical,
                               canvas=tuple(args.canvas),
                               min_detection_confidence=args.min_detection_confidence)
        backend = make_backend(args.backend,
                               min_detection_confidence=config.min_detection_confidence,
                               marker_grid=tuple(args.marker_grid))
        summary = extract_landmarks(config, backend)
        export_canonical(config, backend)
    except (AdapterError, DetectorUnavailableError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return 3
    print(f"detected {summary['detected']}/{summary['frames']} frames "
          f"-> {args.out_landmarks}, {args.out_canonical}")
    if summary["gaps"]:
        print(f"warning: no detection in frames {summary['gaps']} "
              f"(see {summary['warnings_path']})", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
