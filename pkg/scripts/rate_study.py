"""Convergence-rate study: median HS distance against n, with a fitted log-log slope.

    python3 scripts/rate_study.py --replicas 50 --n 16 32 64 128 256 512 --outdir runs/rate
"""
from __future__ import annotations

import argparse
import sys

from circsine import cli, io


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--replicas", type=int, default=50)
    p.add_argument("--n", type=int, nargs="+", default=[16, 32, 64, 128, 256, 512])
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=20240917)
    p.add_argument("--outdir", default="runs/rate")
    args = p.parse_args(argv)
    code = cli.main(["converge", "--outdir", args.outdir,
                     "--set", f"replicas={args.replicas}", "--set", f"n_list={sorted(args.n)}",
                     "--set", f"beta={args.beta}", "--set", f"seed={args.seed}"])
    cols, rows = io.read_csv(io.resolve_outdir(args.outdir) / "converge" / "converge_median.csv")
    print("\t".join(cols))
    for r in rows:
        print("\t".join(r))
    return code


if __name__ == "__main__":
    sys.exit(main())
