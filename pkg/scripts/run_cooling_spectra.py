#!/usr/bin/env python3
"""Synthesize the cooled displacement/voltage spectra and gain sweep.

Produces thermal, trap-noise, total, and voltage-calibrated spectra at the
950 Hz operating point, plus a cooling-gain sweep (mode temperature and
occupancies vs differentiator gain).
"""

import sys
from pathlib import Path

from optospring.cli import main

OUT = Path(__file__).resolve().parent.parent / "runs"


if __name__ == "__main__":
    rc = main(["spectrum", "--config", "experiment",
               "--out-dir", str(OUT / "spectrum_950Hz")])
    rc |= main(["cool", "--config", "experiment",
                "--gel-range", "14:560:14",
                "--out-dir", str(OUT / "cool_sweep")])
    sys.exit(rc)
