"""Run every experiment in sequence through the CLI and summarise exit codes.

    python3 scripts/run_all.py --outdir runs/full
    python3 scripts/run_all.py --quick --outdir runs/quick
"""
from __future__ import annotations

import argparse
import sys
import time

from circsine import cli

# reduced sizes for a few-minute smoke pass; full sizes are the CLI defaults
QUICK = {
    "heatkernel": [],
    "couple-diag": ["step_replicas=1000", "walk_replicas=300", "replicas=2", "n_list=[64,128]"],
    "spectrum": ["dual_replicas=4", "law_replicas=300", "lln_replicas=5"],
    "converge": ["replicas=5", "n_list=[16,32,64,128]"],
    "betadep": ["replicas=5"],
    "validate": ["replicas=10"],
    "figure": [],
}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--outdir", default="runs")
    p.add_argument("--quick", action="store_true", help="reduced replica counts")
    p.add_argument("--only", nargs="*", choices=list(QUICK), help="subset of commands")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)
    codes = {}
    for cmd in args.only or QUICK:
        sets = (QUICK[cmd] if args.quick else []) + [f"workers={args.workers}"]
        argv_cmd = [cmd, "--outdir", args.outdir] + [a for s in sets for a in ("--set", s)]
        print(f"== {cmd}", flush=True)
        start = time.perf_counter()
        codes[cmd] = cli.main(argv_cmd)
        print(f"== {cmd}: exit {codes[cmd]} in {time.perf_counter() - start:.0f}s", flush=True)
    print("summary: " + ", ".join(f"{c}={v}" for c, v in codes.items()))
    return max(codes.values(), default=0)


if __name__ == "__main__":
    sys.exit(main())
