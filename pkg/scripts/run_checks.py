#!/usr/bin/env python3
"""Run the full bound-check battery and print a threshold report.

    python scripts/run_checks.py [OUT_DIR]
"""

import sys
from pathlib import Path

from cmdp_forge.cli import main
from cmdp_forge.fixtures import two_action_chain
from cmdp_forge.textio import dump_cmdp

out = sys.argv[1] if len(sys.argv) > 1 else "out/checks"
Path(out).mkdir(parents=True, exist_ok=True)

model_file = Path(out) / "two_action_chain.cmdp"
model_file.write_text(dump_cmdp(two_action_chain()))

code = main(["--out", out, "verify"])
code = main(["--out", out, "bounds", str(model_file), "--alpha", "0.25", "--quantum", "1"]) or code
sys.exit(code)
