#!/usr/bin/env python3
"""Extract face-mesh landmarks from a frame directory.

Usage:
    extract.py --frames-dir D --out-landmarks L.json --out-canonical C.json [--canvas 512 512]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from landmark_adapter.cli import main

if __name__ == "__main__":
    sys.exit(main())
