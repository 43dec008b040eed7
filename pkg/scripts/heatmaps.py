"""Plans of every method on one synthetic trial, written as PGM heatmaps.

Rows and columns of each plan are reordered so that the ground-truth
correspondence lies on the diagonal; a perfect plan is then a bright diagonal.

    python scripts/heatmaps.py --c 10 --trial 0 --out-dir results/heatmaps
"""

import argparse
from pathlib import Path

import numpy as np

from hpalign.io import write_matrix, write_pgm
from hpalign.learn import AlignmentConfig
from hpalign.synth import METHODS, TrialSpec, make_trial, run_method


def upscale(M, k):
    return np.kron(M, np.ones((k, k)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--c", type=int, default=10)
    ap.add_argument("--trial", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pixels", type=int, default=16, help="pixels per plan entry")
    ap.add_argument("--out-dir", type=Path, default=Path("results/heatmaps"))
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    data = make_trial(TrialSpec(C=args.c, trials=args.trial + 1, seed=args.seed), args.trial)
    cols = data.truth.argmax(axis=1)
    write_pgm(args.out_dir / "truth.pgm", upscale(data.truth[:, cols], args.pixels))
    for method in METHODS:
        report = run_method(data, method, AlignmentConfig())
        name = method.lower().replace("-", "_")
        write_matrix(args.out_dir / f"{name}.csv", report.plan)
        write_pgm(args.out_dir / f"{name}.pgm", upscale(report.plan[:, cols], args.pixels))
        print(f"{method:10s} Acc-1 {report.acc1:.2f}  H {report.entropy:.3f}")


if __name__ == "__main__":
    main()
