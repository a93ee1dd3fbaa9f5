#!/usr/bin/env python3
"""Regenerate the trapped-mode stability maps.

Writes one map for the idealized high-Q preset (the textbook picture: the
intrinsic column at zero detuning) and one for the experimental preset,
where the zero-gain row is anti-damped and the feedback line restores
stability.
"""

import sys
from pathlib import Path

from optospring.cli import main

OUT = Path(__file__).resolve().parent.parent / "runs"


if __name__ == "__main__":
    rc = main(["map", "--config", "ideal",
               "--delta-range", "0:3e6:13",
               "--gel-range", "0:8e-7:9",
               "--out-dir", str(OUT / "map_ideal")])
    rc |= main(["map", "--config", "experiment",
                "--delta-range", "0:1.7e6:18",
                "--gel-range", "0:1.5:16",
                "--out-dir", str(OUT / "map_experiment")])
    sys.exit(rc)
