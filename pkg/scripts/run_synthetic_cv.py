#!/usr/bin/env python3
"""End-to-end experiment on the bundled synthetic corpus.

Generates the dataset, runs k-fold cross-validation, and leaves all
artifacts (metrics, histories, per-fold checkpoints, fold audit) under the
chosen output directory. A smaller, faster variant of the full verification
run; tune the flags to scale it up.

    python scripts/run_synthetic_cv.py --out runs/demo --per-class 60 --epochs 20
"""

import argparse
import os
import sys
import time

from ganclass import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/synthetic_cv")
    parser.add_argument("--per-class", type=int, default=60)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args()

    data_dir = os.path.join(args.out, "data")
    cv_dir = os.path.join(args.out, "cv")
    rc = cli.main(["synth-data", "--out", data_dir, "--per-class", str(args.per_class),
                   "--size", str(args.size), "--seed", str(args.seed), "--force"])
    if rc != 0:
        return rc
    start = time.perf_counter()
    rc = cli.main(["cross-validate", "--data", data_dir, "--out", cv_dir,
                   "--folds", str(args.folds), "--epochs", str(args.epochs),
                   "--batch-size", str(args.batch_size), "--seed", str(args.seed),
                   "--threads", str(args.threads)])
    print(f"cross-validation took {(time.perf_counter() - start) / 60:.1f} min")
    return rc


if __name__ == "__main__":
    sys.exit(main())
