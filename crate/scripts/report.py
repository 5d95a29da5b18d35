#!/usr/bin/env python3
"""Summarise cvssa output.

    report.py estimate.json [more.json ...]   table of estimate records
    report.py sweep.csv [--plot out.png]       threshold sweep table / figure
    report.py bench.csv                        benchmark table

JSON files may hold one record or one record per line.
"""

import argparse
import csv
import json
import sys

SCHEMA_VERSION = 1


def load_records(path):
    with open(path) as f:
        text = f.read().strip()
    try:
        docs = [json.loads(text)]
    except json.JSONDecodeError:
        docs = [json.loads(line) for line in text.splitlines() if line.strip()]
    for d in docs:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SystemExit(f"{path}: unsupported schema_version {d.get('schema_version')}")
    return docs


def fmt(x, spec=".4g"):
    return "-" if x is None else format(x, spec)


def report_records(paths):
    print(f"{'model':<14} {'query':<22} {'crude':>12} {'lcv':>12} {'se':>10} {'d':>3} {'reduction':>10} {'E':>7}")
    for path in paths:
        for r in load_records(path):
            q = r["query"]
            what = f"E[{q['species_name']}]" if q["kind"] == "mean" else f"P({q['species_name']}<={q['level']})"
            what += f" T={q['horizon']:g}"
            lcv = r["lcv"]
            print(
                f"{r['model']:<14} {what:<22} {fmt(r['crude']['estimate']):>12} {fmt(lcv['estimate']):>12} "
                f"{fmt(lcv['std_error'], '.3g'):>10} {lcv['n_cvs']:>3} {fmt(r['variance_reduction']):>10} "
                f"{fmt(r['efficiency'], '.3g'):>7}"
            )


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def report_sweep(rows, plot):
    print(f"{'model':<14} {'level':>6} {'P':>8} {'reduction':>10} {'slowdown':>9} {'E':>7} {'d':>5}")
    for r in rows:
        print(
            f"{r['model']:<14} {r['level']:>6} {float(r['probability']):>8.4f} {float(r['reduction']):>10.3f} "
            f"{float(r['slowdown']):>9.3f} {float(r['efficiency']):>7.3f} {float(r['mean_cvs']):>5.2f}"
        )
    if plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
        for model in sorted({r["model"] for r in rows}):
            sel = [r for r in rows if r["model"] == model]
            levels = [int(r["level"]) for r in sel]
            top.plot(levels, [float(r["probability"]) for r in sel], "o-", label=model)
            bottom.plot(levels, [float(r["efficiency"]) for r in sel], "o-", label=model)
        top.set_ylabel("P(X <= level)")
        bottom.set_ylabel("efficiency")
        bottom.axhline(1.0, color="grey", lw=0.8)
        bottom.set_xlabel("level")
        top.legend()
        fig.tight_layout()
        fig.savefig(plot, dpi=150)
        print(f"wrote {plot}")


def report_bench(rows):
    cols = ["model", "repetitions", "lcv_mean", "reduction", "pooled_reduction", "mean_cvs", "slowdown", "efficiency"]
    print(" ".join(f"{c:>16}" for c in cols))
    for r in rows:
        print(" ".join(f"{r[c]:>16}" if c == "model" else f"{float(r[c]):>16.4g}" for c in cols))


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("files", nargs="+")
    ap.add_argument("--plot", help="write a sweep figure to this path")
    args = ap.parse_args(argv)

    if all(f.endswith(".json") for f in args.files):
        report_records(args.files)
        return
    for path in args.files:
        rows = read_csv(path)
        if not rows:
            continue
        if "level" in rows[0]:
            report_sweep(rows, args.plot)
        else:
            report_bench(rows)


if __name__ == "__main__":
    main(sys.argv[1:])
