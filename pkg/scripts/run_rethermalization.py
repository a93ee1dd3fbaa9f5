#!/usr/bin/env python3
"""Cool/release rethermalization ensemble at the 950 Hz trap.

100 trajectories of the square-wave protocol; writes the averaged phonon
evolution, the fitted initial slope, and the rate-law prediction.
"""

import sys
from pathlib import Path

from optospring.cli import main

OUT = Path(__file__).resolve().parent.parent / "runs"


if __name__ == "__main__":
    sys.exit(main(["retherm", "--config", "experiment",
                   "--n-trajectories", "100",
                   "--duration", "2.0",
                   "--seed", "2718",
                   "--out-dir", str(OUT / "retherm_950Hz")]))
