"""Time single-cloud encoding and threaded batch encoding.

    python3 scripts/encode_latency.py --m 8 --points 2048 --workers 1 2 4 8
"""
import argparse
import os
import time

import numpy as np

from mfv3d.encoder import encode_3dmfv, encode_batch, finalize_normalization
from mfv3d.gmm import build_grid_gmm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=8)
    ap.add_argument("--points", type=int, default=2048)
    ap.add_argument("--repeats", type=int, default=15)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    args = ap.parse_args()

    g = build_grid_gmm(args.m)
    rng = np.random.default_rng(0)
    P = rng.uniform(-1, 1, size=(args.points, 3))
    finalize_normalization(encode_3dmfv(g, P))  # compile
    times = []
    for _ in range(args.repeats):
        t0 = time.perf_counter()
        finalize_normalization(encode_3dmfv(g, P))
        times.append(time.perf_counter() - t0)
    print(f"cpus={os.cpu_count()} m={args.m} T={args.points} "
          f"median={1e3 * np.median(times):.2f} ms")

    clouds = [rng.uniform(-1, 1, size=(args.points, 3)) for _ in range(args.batch)]
    base = None
    for w in args.workers:
        t0 = time.perf_counter()
        out = encode_batch(g, clouds, workers=w)
        dt = time.perf_counter() - t0
        base = base or dt
        print(f"workers={w:2d} {dt:.3f} s speedup={base / dt:.2f}x")


if __name__ == "__main__":
    main()
