"""Classification accuracy and representation sparsity as the shared sigma varies.

    python3 scripts/sigma_sweep.py --sigmas 0.001 0.1 0.2 0.3 0.4
"""
import argparse

from mfv3d.classify import DatasetConfig, TrainConfig
from mfv3d.experiments import SigmaSweepConfig, run_sigma_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigmas", type=float, nargs="+",
                    default=[0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4])
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--test-per-class", type=int, default=50)
    ap.add_argument("--points", type=int, default=1024)
    ap.add_argument("--underflow", choices=("zero", "nearest"), default="zero")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="sigma_sweep.csv")
    args = ap.parse_args()

    cfg = SigmaSweepConfig(
        dataset=DatasetConfig(per_class=args.per_class, t_points=args.points, seed=args.seed),
        test_per_class=args.test_per_class, m=args.m, sigmas=tuple(args.sigmas),
        train=TrainConfig(), underflow=args.underflow, seed=args.seed)
    rep = run_sigma_sweep(cfg)
    rep.write(args.out)
    sparse = {r.config["sigma"]: r.value for r in rep.select("sparsity")}
    for r in rep.select("accuracy"):
        s = r.config["sigma"]
        mark = " (default)" if r.config["default"] else ""
        print(f"sigma={s:<8.4g} acc={r.value:.3f} sparsity={sparse[s]:.4f}{mark}")


if __name__ == "__main__":
    main()
