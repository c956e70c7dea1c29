"""Shared helpers for the figure scripts: run a shipped preset and print columns."""
import csv
import io
from pathlib import Path

from actionnoise.cli import default_threads, preset_text
from actionnoise.config import parse_plan
from actionnoise.runner import default_output_root, run_plan


def run_preset(name, output=None, threads=None) -> Path:
    plan = parse_plan(preset_text(name))
    outcome = run_plan(plan, output or default_output_root(), workers=threads or default_threads())
    print(f"wrote {', '.join(f.name for f in outcome.files)} to {outcome.directory}")
    if outcome.n_failed:
        print(f"{outcome.n_failed} points failed (see the error column)")
    return outcome.directory


def table(path, columns):
    text = "".join(l for l in Path(path).read_text().splitlines(True) if not l.startswith("#"))
    rows = list(csv.DictReader(io.StringIO(text)))
    print("  ".join(f"{c:>12s}" for c in columns))
    for r in rows:
        cells = []
        for c in columns:
            v = r[c]
            try:
                cells.append(f"{float(v):12.6g}")
            except ValueError:
                cells.append(f"{v:>12s}")
        print("  ".join(cells))
