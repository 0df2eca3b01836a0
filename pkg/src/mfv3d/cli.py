"""Command line front end.

Exit codes: 0 success, 1 (partial) failure, 2 usage error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path


from . import classify, experiments
from .classify import DatasetConfig, LabeledDataset, MlpModel, TrainConfig
from .corrupt import CorruptionSpec
from .encoder import VARIANTS, encode_3dmfv, encode_fv, finalize_normalization, save_tensor
from .errors import MfvError
from .gmm import GMM, build_grid_gmm
from .pointcloud import load_cloud, normalize_unit_sphere, save_xyz
from .reconstruct import recover_plane, recover_planes

log = logging.getLogger("mfv3d")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"'{args.command}' is randomized and needs an explicit --seed")
    return args.seed


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_config(args) -> TrainConfig:
    return TrainConfig(hidden=args.hidden, learning_rate=args.lr, epochs=args.epochs,
                       batch_size=args.batch_size, seed=args.seed or 0)


def _dataset_config(args) -> DatasetConfig:
    return DatasetConfig(classes=tuple(args.classes.split(",")), per_class=args.per_class,
                         t_points=args.points, seed=args.seed)


# ----------------------------------------------------------------------------
# commands

def cmd_encode(args):
    if any(Path(p).suffix.lower() == ".off" for p in args.inputs):
        _require_seed(args)
    out = _out_dir(args)
    gmm = build_grid_gmm(args.m, args.sigma)
    failures = []
    for path in args.inputs:
        try:
            pc = normalize_unit_sphere(load_cloud(path, args.points, args.seed or 0))
            rep = encode_3dmfv(gmm, pc, args.variant, require_grid=True)
            if not args.no_finalize:
                rep = finalize_normalization(rep)
            target = out / (Path(path).stem + ".bin")
            save_tensor(target, rep, gmm, dtype="float64" if args.float64 else "float32",
                        extra={"source": str(path), "sigma": float(gmm.sigmas[0])})
            log.info("encoded %s -> %s", path, target)
        except (OSError, MfvError, ValueError) as exc:
            failures.append((path, str(exc)))
    for path, msg in failures:
        print(f"error: {path}: {msg}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


def cmd_reconstruct_plane(args):
    if Path(args.input).suffix.lower() == ".off":
        _require_seed(args)
    pc = load_cloud(args.input, args.points, args.seed or 0)
    gmm = build_grid_gmm(args.m, args.sigma)
    fv = encode_fv(gmm, pc)
    if args.gaussian is not None:
        planes = [recover_plane(fv, gmm, args.gaussian, len(pc), args.min_points)]
    else:
        planes = recover_planes(fv, gmm, len(pc), args.min_points)
    text = json.dumps([p.to_dict() for p in planes], indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if planes else EXIT_FAIL


def cmd_corrupt(args):
    spec = CorruptionSpec.parse(args.corrupt)
    if "seed=" not in args.corrupt:
        spec = CorruptionSpec(spec.kind, spec.params, _require_seed(args))
    if args.out is None:
        raise UsageError("--out is required")
    pc = load_cloud(args.input, args.points, spec.seed)
    save_xyz(args.out, spec.apply(pc), header=str(spec))
    return EXIT_OK


def cmd_dataset(args):
    seed = _require_seed(args)
    if args.out is None:
        raise UsageError("--out is required")
    if args.modelnet:
        ds = classify.load_modelnet(args.modelnet, args.split, args.points, seed)
    else:
        ds = classify.generate_synthetic_dataset(args.classes.split(","), args.per_class,
                                                 args.points, seed, args.split)
    ds.save(args.out)
    print(f"{len(ds)} items, classes {list(ds.class_names)}")
    return EXIT_OK


def cmd_train(args):
    _require_seed(args)
    if args.out is None:
        raise UsageError("--out is required (model path prefix)")
    ds = LabeledDataset.load(args.data)
    gmm = build_grid_gmm(args.m, args.sigma)
    model = classify.train_classifier(ds, gmm, args.variant, _train_config(args), args.threads)
    model.save(args.out)
    Path(f"{args.out}.gmm.json").write_text(gmm.to_json())
    Path(f"{args.out}.meta.json").write_text(json.dumps(
        {"variant": args.variant, "class_names": list(ds.class_names)}, indent=2))
    print(f"final training loss {model.loss_history[-1]:.6f}")
    return EXIT_OK


def cmd_eval(args):
    model = MlpModel.load(args.model)
    gmm = GMM.from_json(Path(f"{args.model}.gmm.json").read_text())
    meta = json.loads(Path(f"{args.model}.meta.json").read_text())
    ds = LabeledDataset.load(args.data)
    metrics = classify.evaluate(model, ds, gmm, meta["variant"], args.threads)
    metrics["class_names"] = list(ds.class_names)
    text = json.dumps(metrics, indent=2)
    if args.out:
        out = _out_dir(args)
        (out / "metrics.json").write_text(text + "\n")
        rep = experiments.ExperimentReport()
        cfg = {"experiment": "eval", "model": str(args.model), "data": str(args.data),
               "variant": meta["variant"]}
        rep.add(cfg, "accuracy", metrics["accuracy"])
        for name, acc in zip(ds.class_names, metrics["per_class_accuracy"]):
            rep.add(dict(cfg, class_name=name), "class_accuracy", acc)
        rep.write(out / "metrics.csv")
    print(text)
    return EXIT_OK


def _grid_from_args(args):
    grid = {}
    for item in args.grid:
        kind, _, levels = item.partition("=")
        if kind not in experiments.LEVEL_PARAM:
            raise UsageError(f"unknown corruption kind {kind!r}")
        grid[kind] = list(_floats(levels)) if levels else [1]
    return grid or dict(experiments.DEFAULT_GRID)


def cmd_robustness(args):
    seed = _require_seed(args)
    out = _out_dir(args)
    cfg = experiments.RobustnessConfig(
        dataset=_dataset_config(args), test_per_class=args.test_per_class, m=args.m,
        sigma=args.sigma, variant=args.variant, train=_train_config(args),
        grid=_grid_from_args(args), noise_copies=args.noise_copies, seed=seed,
        workers=args.threads)
    report = experiments.run_robustness(cfg)
    report.write(out / "robustness.csv")
    print(f"wrote {len(report.rows)} rows to {out / 'robustness.csv'}")
    return EXIT_OK


def cmd_sigma_sweep(args):
    seed = _require_seed(args)
    out = _out_dir(args)
    cfg = experiments.SigmaSweepConfig(
        dataset=_dataset_config(args), test_per_class=args.test_per_class, m=args.m,
        sigmas=args.sigmas, variant=args.variant, train=_train_config(args),
        underflow=args.underflow, seed=seed, workers=args.threads)
    report = experiments.run_sigma_sweep(cfg)
    report.write(out / "sigma_sweep.csv")
    print(f"wrote {len(report.rows)} rows to {out / 'sigma_sweep.csv'}")
    return EXIT_OK


def cmd_resolution_sweep(args):
    seed = _require_seed(args)
    out = _out_dir(args)
    cfg = experiments.ResolutionSweepConfig(
        dataset=_dataset_config(args), test_per_class=args.test_per_class, ms=args.ms,
        point_counts=args.point_counts, variant=args.variant, train=_train_config(args),
        seed=seed, workers=args.threads)
    report = experiments.run_resolution_sweep(cfg)
    report.write(out / "resolution_sweep.csv")
    experiments._atomic_write_text(out / "resolution_matrix.csv",
                                   experiments.resolution_matrix_csv(report))
    print(f"wrote {len(report.rows)} rows to {out / 'resolution_sweep.csv'}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed for every random draw (required by randomized commands)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for encoding")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--m", type=int, default=5, help="grid resolution")
    grid.add_argument("--sigma", type=float, default=None, help="Gaussian std (default 1/m)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--classes", default=",".join(classify.SHAPES))
    data.add_argument("--per-class", type=int, default=100)
    data.add_argument("--test-per-class", type=int, default=50)
    data.add_argument("--points", type=int, default=1024)

    train = argparse.ArgumentParser(add_help=False)
    train.add_argument("--variant", choices=VARIANTS, default="full")
    train.add_argument("--hidden", type=_ints, default=(256, 128))
    train.add_argument("--epochs", type=int, default=40)
    train.add_argument("--lr", type=float, default=0.05)
    train.add_argument("--batch-size", type=int, default=32)

    p = argparse.ArgumentParser(prog="mfv3d", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("encode", parents=[common, grid], help="encode clouds to grid tensors")
    s.add_argument("inputs", nargs="+", help=".xyz files or .off meshes")
    s.add_argument("--variant", choices=VARIANTS, default="full")
    s.add_argument("--points", type=int, default=2048, help="samples per .off mesh")
    s.add_argument("--float64", action="store_true", help="write double precision")
    s.add_argument("--no-finalize", action="store_true")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("reconstruct-plane", parents=[common, grid],
                       help="recover plane parameters from a cloud's Fisher vector")
    s.add_argument("input")
    s.add_argument("--gaussian", type=int, default=None)
    s.add_argument("--min-points", type=float, default=30.0)
    s.add_argument("--points", type=int, default=2048)
    s.set_defaults(func=cmd_reconstruct_plane)

    s = sub.add_parser("corrupt", parents=[common], help="apply one corruption to a cloud")
    s.add_argument("input")
    s.add_argument("--corrupt", required=True, help="e.g. kind=perturb,sigma=0.01,seed=3")
    s.add_argument("--points", type=int, default=2048)
    s.set_defaults(func=cmd_corrupt)

    s = sub.add_parser("dataset", parents=[common, data], help="build a dataset .npz")
    s.add_argument("--split", default="train")
    s.add_argument("--modelnet", default=None, help="ModelNet root with <class>/<split>/*.off")
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", parents=[common, grid, train], help="train an MLP on 3DmFV")
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="evaluate a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("robustness", parents=[common, grid, data, train],
                       help="accuracy under corruptions, with and without noisy training")
    s.add_argument("--grid", action="append", default=[],
                   help="kind=level,level,... (repeatable); default grid if omitted")
    s.add_argument("--noise-copies", type=int, default=4)
    s.set_defaults(func=cmd_robustness)

    s = sub.add_parser("sigma-sweep", parents=[common, data, train], help="accuracy vs sigma")
    s.add_argument("--m", type=int, default=5)
    s.add_argument("--sigmas", type=_floats, default=(0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4))
    s.add_argument("--underflow", choices=("zero", "nearest"), default="zero")
    s.set_defaults(func=cmd_sigma_sweep)

    s = sub.add_parser("resolution-sweep", parents=[common, data, train],
                       help="accuracy vs grid resolution and point count")
    s.add_argument("--ms", type=_ints, default=(3, 5, 8))
    s.add_argument("--point-counts", type=_ints, default=(128, 512, 1024))
    s.set_defaults(func=cmd_resolution_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MfvError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
