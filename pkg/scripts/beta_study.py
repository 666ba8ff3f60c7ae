"""Shared-path beta perturbation study over a grid of delta values.

    python3 scripts/beta_study.py --beta 2 --replicas 20 --outdir runs/beta
"""
from __future__ import annotations

import argparse
import sys

from circsine import cli, io


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--deltas", type=float, nargs="+", default=[1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3])
    p.add_argument("--outdir", default="runs/beta")
    args = p.parse_args(argv)
    code = cli.main(["betadep", "--outdir", args.outdir, "--set", f"beta={args.beta}",
                     "--set", f"replicas={args.replicas}", "--set", f"deltas={sorted(args.deltas)}"])
    cols, rows = io.read_csv(io.resolve_outdir(args.outdir) / "betadep" / "betadep_fit.csv")
    print("\t".join(cols))
    for r in rows:
        print("\t".join(r))
    return code


if __name__ == "__main__":
    sys.exit(main())
