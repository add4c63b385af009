#!/usr/bin/env python3
"""Full-scale reproduction driver. NOT part of the test suite.

Runs the full protocol (six datasets, both model variants, three negative
sampling strategies, transductive + inductive, published hyperparameters,
100 epochs / patience 20) through the CLI. Expect days of CPU time; a GPU
implementation is out of scope. Requires the real dataset CSVs, e.g.:

    data/
      wikipedia.csv   # src,dst,timestamp,label[,features...]
      reddit.csv
      mooc.csv
      lastfm.csv
      enron.csv
      uci.csv

Usage:
    python scripts/reproduce_full.py --data-dir data --out runs [--datasets uci,enron]
"""

import argparse
import subprocess
import sys
from pathlib import Path

DATASETS = ["wikipedia", "reddit", "mooc", "lastfm", "enron", "uci"]
SEEDS = [0, 1, 2]


def run(cmd):
    print("+", " ".join(str(c) for c in cmd), flush=True)
    subprocess.run([sys.executable, "-m", "repeatmix.cli", *map(str, cmd)], check=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data-dir", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--datasets", default=",".join(DATASETS))
    args = ap.parse_args()
    data_dir = Path(args.data_dir)
    out_root = Path(args.out)

    for name in args.datasets.split(","):
        csv = data_dir / f"{name}.csv"
        if not csv.exists():
            print(f"skipping {name}: {csv} not found", file=sys.stderr)
            continue
        cache = out_root / name / "graph.rmxg"
        cache.parent.mkdir(parents=True, exist_ok=True)
        run(["ingest", str(csv), "--dataset", name, "--out", str(cache)])
        for model in ("repeatmixer", "repeatmixer-f"):
            for seed in SEEDS:
                run_dir = out_root / name / f"{model}-seed{seed}"
                run([
                    "train", "--cache", cache, "--dataset", name,
                    "--model", model, "--seed", seed, "--out", run_dir,
                ])
                for neg in ("rnd", "hist", "ind"):
                    run([
                        "eval", "--cache", cache,
                        "--checkpoint", run_dir / "checkpoint.rmxc",
                        "--neg", neg,
                        "--out", run_dir / f"test_{neg}.txt",
                    ])
                    run([
                        "eval", "--cache", cache,
                        "--checkpoint", run_dir / "checkpoint.rmxc",
                        "--neg", neg, "--inductive",
                        "--out", run_dir / f"test_{neg}_inductive.txt",
                    ])


if __name__ == "__main__":
    main()
