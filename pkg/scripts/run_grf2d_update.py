#!/usr/bin/env python3
"""Run the grf2d_update experiment with the checked-in default config."""

import sys
from pathlib import Path

from enif_lab.cli import main

if __name__ == "__main__":
    config = Path(__file__).resolve().parents[1] / "configs" / "grf2d_update.yaml"
    sys.exit(main(["run", str(config), *sys.argv[1:]]))
