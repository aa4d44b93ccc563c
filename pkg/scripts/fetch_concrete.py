#!/usr/bin/env python3
"""Fetch the UCI Concrete Compressive Strength data and write data/concrete.csv.

The repository ships the converted CSV already; this script regenerates it
from a public mirror of the dataset (whitespace-separated, 1030 rows, 8
features plus the strength column).
"""
import sys
import urllib.request
from pathlib import Path

MIRROR = (
    "https://github.com/yaringal/DropoutUncertaintyExps/raw/master/"
    "UCI_Datasets/concrete/data/data.txt"
)
HEADER = (
    "cement,blast_furnace_slag,fly_ash,water,superplasticizer,"
    "coarse_aggregate,fine_aggregate,age,strength"
)
OUT = Path(__file__).resolve().parent.parent / "data" / "concrete.csv"


def main() -> int:
    print(f"fetching {MIRROR}")
    raw = urllib.request.urlopen(MIRROR, timeout=60).read().decode("utf-8")
    rows = []
    for line in raw.splitlines():
        parts = line.split()
        if len(parts) == 9:
            rows.append([float(p) for p in parts])
    if len(rows) != 1030:
        print(f"expected 1030 rows, got {len(rows)}", file=sys.stderr)
        return 1
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        for r in rows:
            fh.write(",".join(repr(v) for v in r) + "\n")
    print(f"wrote {OUT} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
