"""Experiment runners behind the CLI and their long-format CSV reports."""
import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import corrupt
from .classify import (DatasetConfig, LabeledDataset, TrainConfig, evaluate_features,
                       extract_features, synthetic_splits, train_mlp)
from .encoder import encode_3dmfv, sparsity
from .gmm import build_grid_gmm

FORMAT_VERSION = "1"
CSV_FIELDS = ("format_version", "config", "metric", "value")


@dataclass(frozen=True)
class ReportRow:
    config: dict
    metric: str
    value: float


@dataclass
class ExperimentReport:
    rows: List[ReportRow] = field(default_factory=list)
    format_version: str = FORMAT_VERSION

    def add(self, config: dict, metric: str, value: float):
        self.rows.append(ReportRow(dict(config), metric, float(value)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in self.rows:
            writer.writerow([self.format_version, json.dumps(r.config, sort_keys=True),
                             r.metric, repr(r.value)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ExperimentReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != CSV_FIELDS:
            raise ValueError(f"unexpected report header {header}")
        rows, version = [], FORMAT_VERSION
        for rec in reader:
            version = rec[0]
            rows.append(ReportRow(json.loads(rec[1]), rec[2], float(rec[3])))
        return cls(rows, version)

    def write(self, path):
        _atomic_write_text(Path(path), self.to_csv())

    @classmethod
    def read(cls, path) -> "ExperimentReport":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))

    def select(self, metric: Optional[str] = None, **match) -> List[ReportRow]:
        return [r for r in self.rows
                if (metric is None or r.metric == metric)
                and all(r.config.get(k) == v for k, v in match.items())]


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dataset_dict(cfg: DatasetConfig, test_per_class: int) -> dict:
    d = asdict(cfg)
    d["classes"] = list(cfg.classes)
    d["test_per_class"] = test_per_class
    return d


def _train_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d


# ----------------------------------------------------------------------------
# robustness

# corruption kind -> parameter that a grid level sets
LEVEL_PARAM = {"delete_uniform": "ratio", "delete_region": "ratio", "outliers": "count",
               "perturb": "sigma", "rotate": None}

DEFAULT_GRID = {
    "delete_uniform": [0.25, 0.5, 0.75, 0.875, 0.9375],
    "delete_region": [0.05, 0.1, 0.2, 0.3, 0.4],
    "outliers": [10, 50, 100, 200, 500],
    "perturb": [0.005, 0.01, 0.02, 0.03, 0.05],
    "rotate": [1],
}


def corruption_spec(kind: str, level, seed: int) -> corrupt.CorruptionSpec:
    param = LEVEL_PARAM[kind]
    params = {} if param is None else {param: int(level) if param == "count" else float(level)}
    return corrupt.CorruptionSpec(kind, params, seed)


def corrupt_dataset(ds: LabeledDataset, kind: str, level, seed: int) -> LabeledDataset:
    """Apply one corruption level to every cloud, item i seeded by ``(seed, i)``."""
    return ds.map(lambda pc, i: corruption_spec(kind, level, seed * 1_000_003 + i).apply(pc))


@dataclass(frozen=True)
class RobustnessConfig:
    dataset: DatasetConfig = DatasetConfig()
    test_per_class: int = 50
    m: int = 5
    sigma: Optional[float] = None
    variant: str = "full"
    train: TrainConfig = TrainConfig()
    grid: Dict[str, list] = field(default_factory=lambda: dict(DEFAULT_GRID))
    train_noise: tuple = (False, True)
    # corrupted copies of the training set used when training with noise
    noise_copies: int = 4
    seed: int = 0
    workers: int = 1


def _noisy_training_set(train: LabeledDataset, kind: str, levels, copies: int, seed: int):
    rng = np.random.default_rng([seed, 7])
    sets = []
    for c in range(copies):
        picks = rng.integers(len(levels), size=len(train))
        sets.append(train.map(lambda pc, i: corruption_spec(
            kind, levels[picks[i]], seed * 1_000_003 + (c + 1) * 100_000 + i).apply(pc)))
    return sets


def run_robustness(cfg: RobustnessConfig) -> ExperimentReport:
    """Accuracy under each corruption level, for clean and noise-trained models.

    Per training flag and corruption kind the report holds a level-0 (clean
    test) row followed by one row per grid level.
    """
    train, test = synthetic_splits(cfg.dataset, cfg.test_per_class)
    gmm = build_grid_gmm(cfg.m, cfg.sigma)
    n_cls = len(train.class_names)

    def feats(ds):
        return extract_features(ds, gmm, cfg.variant, cfg.workers)

    base = {"experiment": "robustness", "seed": cfg.seed, "m": cfg.m,
            "sigma": float(gmm.sigmas[0]), "variant": cfg.variant,
            "dataset": _dataset_dict(cfg.dataset, cfg.test_per_class),
            "train": _train_dict(cfg.train)}
    report = ExperimentReport()
    X_train = feats(train)
    X_test = feats(test)
    clean_model = None
    for flag in cfg.train_noise:
        for kind, levels in cfg.grid.items():
            if flag:
                noisy = _noisy_training_set(train, kind, levels, cfg.noise_copies, cfg.seed)
                X = np.vstack([X_train] + [feats(ds) for ds in noisy])
                y = np.concatenate([train.labels] * (len(noisy) + 1))
                model = train_mlp(X, y, n_cls, cfg.train)
            else:
                if clean_model is None:
                    clean_model = train_mlp(X_train, train.labels, n_cls, cfg.train)
                model = clean_model
            row = dict(base, kind=kind, train_noise=bool(flag))
            acc = evaluate_features(model, X_test, test.labels)["accuracy"]
            report.add(dict(row, level=0, corruption="none"), "accuracy", acc)
            for j, level in enumerate(levels):
                seed = cfg.seed + 1 + j
                corrupted = corrupt_dataset(test, kind, level, seed)
                acc = evaluate_features(model, feats(corrupted), test.labels)["accuracy"]
                spec = str(corruption_spec(kind, level, seed))
                report.add(dict(row, level=level, corruption=spec), "accuracy", acc)
    return report


# ----------------------------------------------------------------------------
# sigma sweep

@dataclass(frozen=True)
class SigmaSweepConfig:
    dataset: DatasetConfig = DatasetConfig()
    test_per_class: int = 50
    m: int = 5
    sigmas: tuple = (0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4)
    variant: str = "full"
    train: TrainConfig = TrainConfig()
    # points whose densities all underflow contribute nothing, so a tiny
    # sigma leaves the representation empty
    underflow: str = "zero"
    seed: int = 0
    workers: int = 1


def run_sigma_sweep(cfg: SigmaSweepConfig) -> ExperimentReport:
    """Accuracy and pre-finalization sparsity per sigma, in increasing sigma order.

    The default ``1/m`` is always included and marked ``default: true``.
    """
    if any(s <= 0 for s in cfg.sigmas):
        raise ValueError("sigmas must be positive")
    train, test = synthetic_splits(cfg.dataset, cfg.test_per_class)
    default = 1.0 / cfg.m
    sigmas = sorted(set(float(s) for s in cfg.sigmas) | {default})
    report = ExperimentReport()
    for s in sigmas:
        gmm = build_grid_gmm(cfg.m, s)
        X_tr = extract_features(train, gmm, cfg.variant, cfg.workers, cfg.underflow)
        X_te = extract_features(test, gmm, cfg.variant, cfg.workers, cfg.underflow)
        model = train_mlp(X_tr, train.labels, len(train.class_names), cfg.train)
        acc = evaluate_features(model, X_te, test.labels)["accuracy"]
        sp = float(np.mean([sparsity(encode_3dmfv(gmm, pc, cfg.variant, underflow=cfg.underflow))
                            for pc in test.clouds]))
        row = {"experiment": "sigma-sweep", "seed": cfg.seed, "m": cfg.m, "sigma": s,
               "default": bool(np.isclose(s, default)), "variant": cfg.variant,
               "underflow": cfg.underflow,
               "dataset": _dataset_dict(cfg.dataset, cfg.test_per_class),
               "train": _train_dict(cfg.train)}
        report.add(row, "accuracy", acc)
        report.add(row, "sparsity", sp)
    return report


# ----------------------------------------------------------------------------
# resolution sweep

@dataclass(frozen=True)
class ResolutionSweepConfig:
    dataset: DatasetConfig = DatasetConfig()
    test_per_class: int = 50
    ms: tuple = (3, 5, 8)
    point_counts: tuple = (128, 512, 1024)
    variant: str = "full"
    train: TrainConfig = TrainConfig()
    seed: int = 0
    workers: int = 1


def run_resolution_sweep(cfg: ResolutionSweepConfig) -> ExperimentReport:
    """Accuracy and encoding wall time for every (m, T) cell."""
    report = ExperimentReport()
    for t_points in cfg.point_counts:
        dcfg = replace(cfg.dataset, t_points=int(t_points))
        train, test = synthetic_splits(dcfg, cfg.test_per_class)
        for m in cfg.ms:
            gmm = build_grid_gmm(int(m))
            start = time.perf_counter()
            X_tr = extract_features(train, gmm, cfg.variant, cfg.workers)
            X_te = extract_features(test, gmm, cfg.variant, cfg.workers)
            elapsed = time.perf_counter() - start
            model = train_mlp(X_tr, train.labels, len(train.class_names), cfg.train)
            acc = evaluate_features(model, X_te, test.labels)["accuracy"]
            row = {"experiment": "resolution-sweep", "seed": cfg.seed, "m": int(m),
                   "t_points": int(t_points), "sigma": 1.0 / m, "variant": cfg.variant,
                   "dataset": _dataset_dict(dcfg, cfg.test_per_class),
                   "train": _train_dict(cfg.train)}
            report.add(row, "accuracy", acc)
            report.add(row, "encode_seconds", elapsed)
    return report


def resolution_matrix_csv(report: ExperimentReport, metric: str = "accuracy") -> str:
    """Pivot a resolution sweep into rows of T and columns of m."""
    rows = report.select(metric)
    ms = sorted({r.config["m"] for r in rows})
    ts = sorted({r.config["t_points"] for r in rows})
    cell = {(r.config["t_points"], r.config["m"]): r.value for r in rows}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t_points"] + [f"m={m}" for m in ms])
    for t in ts:
        writer.writerow([t] + [repr(cell[(t, m)]) if (t, m) in cell else "" for m in ms])
    return buf.getvalue()
