#!/usr/bin/env python3
"""Train the constrained actor-critic on the 5x5 grid and evaluate seed 1.

Writes per-seed training logs, checkpoints and the aggregate curve to the
output directory, then Monte-Carlo-evaluates the first seed's checkpoint.

    python scripts/train_desk_gridworld.py [OUT_DIR]
"""

import sys
from pathlib import Path

from cmdp_forge.cli import main

out = sys.argv[1] if len(sys.argv) > 1 else "out/desk"
cfg = str(Path(__file__).resolve().parent.parent / "configs" / "desk_gridworld.cfg")

code = main(["--config", cfg, "--out", out, "train"])
if code == 0:
    code = main(
        ["--config", cfg, "--out", out, "evaluate",
         "--checkpoint", str(Path(out) / "checkpoint_seed1.txt")]
    )
sys.exit(code)
