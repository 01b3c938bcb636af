#!/usr/bin/env python3
"""Rebuild per-method aggregates from results.csv and compare with summary.json."""
import csv
import json
import math
import sys
from collections import defaultdict
from pathlib import Path

TOL = 1e-9


def mean(xs):
    return math.fsum(xs) / len(xs) if xs else None


def main(out):
    out = Path(out)
    summary = json.loads((out / "summary.json").read_text())
    cols = defaultdict(lambda: defaultdict(list))
    rows = defaultdict(int)
    with open(out / "results.csv", newline="") as f:
        for r in csv.DictReader(f):
            m = r["method_id"]
            rows[m] += 1
            if r["drop"] != "":
                cols[m]["average_drop"].append(float(r["drop"]))
                cols[m]["average_increase"].append(100.0 * int(r["increase_flag"]))
            cols[m]["deletion_auc"].append(float(r["deletion_auc"]))
            cols[m]["insertion_auc"].append(float(r["insertion_auc"]))
            if r["pointing_hit"] != "":
                cols[m]["pointing"].append(float(r["pointing_hit"]))

    bad = []
    if set(rows) != set(summary["methods"]):
        bad.append(f"method sets differ: {sorted(rows)} vs {sorted(summary['methods'])}")
    for m, emitted in summary["methods"].items():
        if emitted["n_images"] != rows[m]:
            bad.append(f"{m}: n_images {emitted['n_images']} != {rows[m]}")
        n_excluded = rows[m] - len(cols[m]["average_drop"])
        if emitted["n_drop_excluded"] != n_excluded:
            bad.append(f"{m}: n_drop_excluded {emitted['n_drop_excluded']} != {n_excluded}")
        for key in ("average_drop", "average_increase", "deletion_auc", "insertion_auc"):
            want, got = mean(cols[m][key]), emitted[key]
            if (want is None) != (got is None) or (want is not None and abs(want - got) > TOL):
                bad.append(f"{m}: {key} {got} != {want}")
        hits = cols[m]["pointing"]
        if hits:
            p = emitted.get("pointing")
            if p is None or p["n"] != len(hits) or abs(p["accuracy"] - mean(hits)) > TOL:
                bad.append(f"{m}: pointing {p} != n={len(hits)} accuracy={mean(hits)}")
        elif "pointing" in emitted:
            bad.append(f"{m}: pointing reported without hits")

    for line in bad:
        print(line)
    print(f"{sum(rows.values())} rows, {len(rows)} methods: {'mismatch' if bad else 'aggregates agree'}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))
