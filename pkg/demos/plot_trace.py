"""Plot gap against cumulative oracle calls from a trace CSV (needs matplotlib)."""

import argparse
import csv

import matplotlib.pyplot as plt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("trace")
    ap.add_argument("--x", default="iter", help="x column (iter or an oracle count column)")
    ap.add_argument("--out", default="trace.png")
    args = ap.parse_args()
    with open(args.trace, newline="") as fh:
        rows = list(csv.DictReader(fh))
    x = [float(r[args.x]) for r in rows]
    y = [max(float(r["gap"]), 1e-300) for r in rows]
    plt.semilogy(x, y, marker=".")
    plt.xlabel(args.x)
    plt.ylabel("gap")
    plt.tight_layout()
    plt.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
