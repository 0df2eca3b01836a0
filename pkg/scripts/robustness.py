"""Accuracy under test-time corruption, with and without noisy training copies.

    python3 scripts/robustness.py --out results/robustness.csv
"""
import argparse

from mfv3d.classify import DatasetConfig, TrainConfig
from mfv3d.experiments import RobustnessConfig, run_robustness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--test-per-class", type=int, default=50)
    ap.add_argument("--points", type=int, default=1024)
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="robustness.csv")
    args = ap.parse_args()

    cfg = RobustnessConfig(
        dataset=DatasetConfig(per_class=args.per_class, t_points=args.points, seed=args.seed),
        test_per_class=args.test_per_class, m=args.m, train=TrainConfig(epochs=args.epochs),
        seed=args.seed)
    rep = run_robustness(cfg)
    rep.write(args.out)
    for r in rep.select("accuracy"):
        c = r.config
        print(f"{c['corruption']:15s} level={c['level']!s:6s} "
              f"noisy_train={c['train_noise']!s:5s} acc={r.value:.3f}")


if __name__ == "__main__":
    main()
