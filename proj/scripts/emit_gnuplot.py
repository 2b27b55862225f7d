#!/usr/bin/env python3
"""Emit a gnuplot script that plots rolling-mean reward curves.

Usage: emit_gnuplot.py curve.csv [curve2.csv ...] [--window N] > curves.gp
"""

import argparse
import csv
import os
import sys
import tempfile


def rolling(values, window):
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("curves", nargs="+", help="curve.csv files written by 'dimap train'")
    parser.add_argument("--window", type=int, default=100, help="rolling mean window")
    parser.add_argument("--out-dir", default=None,
                        help="where to write the .dat files (default: alongside each csv)")
    args = parser.parse_args()

    plots = []
    for path in args.curves:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        rewards = [float(r["reward"]) for r in rows]
        smoothed = rolling(rewards, args.window)
        out_dir = args.out_dir or os.path.dirname(path) or "."
        dat = os.path.join(out_dir, os.path.basename(path).replace(".csv", ".dat"))
        with open(dat, "w") as f:
            f.write("# episode rolling_reward stage\n")
            for i, (r, row) in enumerate(zip(smoothed, rows)):
                f.write(f"{i} {r:.6f} {row['stage']}\n")
        title = os.path.basename(os.path.dirname(path)) or os.path.basename(path)
        plots.append(f"'{dat}' using 1:2 with lines title '{title}'")

    print("set xlabel 'episode'")
    print(f"set ylabel 'rolling mean reward (window {args.window})'")
    print("set yrange [0:1.05]")
    print("set key bottom right")
    print("plot " + ", \\\n     ".join(plots))


if __name__ == "__main__":
    sys.exit(main())
