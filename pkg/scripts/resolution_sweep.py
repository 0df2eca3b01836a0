"""Accuracy over grid resolution m and points per cloud, printed as a matrix.

    python3 scripts/resolution_sweep.py --ms 3 5 8 --points 128 512 1024
"""
import argparse

from mfv3d.classify import DatasetConfig, TrainConfig
from mfv3d.experiments import (ResolutionSweepConfig, resolution_matrix_csv,
                               run_resolution_sweep)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ms", type=int, nargs="+", default=[3, 5, 8])
    ap.add_argument("--points", type=int, nargs="+", default=[128, 512, 1024])
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--test-per-class", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="resolution_sweep.csv")
    args = ap.parse_args()

    cfg = ResolutionSweepConfig(
        dataset=DatasetConfig(per_class=args.per_class, seed=args.seed),
        test_per_class=args.test_per_class, ms=tuple(args.ms),
        point_counts=tuple(args.points), train=TrainConfig(), seed=args.seed)
    rep = run_resolution_sweep(cfg)
    rep.write(args.out)
    print(resolution_matrix_csv(rep), end="")


if __name__ == "__main__":
    main()
