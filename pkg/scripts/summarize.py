"""Print every check recorded under an output directory.

    python3 scripts/summarize.py runs
"""
from __future__ import annotations

import json
import sys
from pathlib import Path


def main(argv=None) -> int:
    root = Path((argv or sys.argv[1:] or ["runs"])[0])
    manifests = sorted(root.glob("**/manifest.json"))
    if not manifests:
        print(f"no manifests under {root}", file=sys.stderr)
        return 1
    worst = 0
    for m in manifests:
        d = json.loads(m.read_text())
        wall = d.get("wall_clock")
        print(f"{d['command']}: {d['status']} (exit {d['exit_code']}, "
              f"{'?' if wall is None else f'{wall:.0f}s'}, config {d['config_hash']})")
        for c in d.get("checks", []):
            tag = f"[{c['criterion']}] " if c.get("criterion") is not None else ""
            print(f"  {'PASS' if c['passed'] else 'FAIL'} {tag}{c['name']}: {c['detail']}")
        worst = max(worst, d["exit_code"] or 0)
    return worst


if __name__ == "__main__":
    sys.exit(main())
