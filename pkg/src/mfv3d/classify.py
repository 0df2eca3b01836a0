"""Desk-scale classification on 3DmFV features.

A synthetic shape dataset stands in for ModelNet; the classifier is a plain
numpy MLP (ReLU hidden layers, softmax output) trained with mini-batch SGD.
"""
import json
import zlib
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import corrupt
from .encoder import encode_batch
from .errors import DivergenceError, ShapeError
from .gmm import GMM
from .pointcloud import load_off_mesh, normalize_unit_sphere, sample_mesh

SHAPES = ("sphere", "cube", "cylinder", "cone", "torus", "plane")


# ----------------------------------------------------------------------------
# synthetic surfaces; each sampler returns n points uniform over the surface

def _sample_sphere(n, rng):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_cube(n, rng):
    face = rng.integers(6, size=n)
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    out = np.empty((n, 3))
    for a in range(3):
        rest = [b for b in range(3) if b != a]
        sel = axis == a
        out[sel, a] = sign[sel]
        out[np.ix_(sel, rest)] = uv[sel]
    return out


def _sample_cylinder(n, rng, radius=0.5, height=2.0):
    side = 2 * np.pi * radius * height
    cap = np.pi * radius ** 2
    part = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
    theta = rng.uniform(0, 2 * np.pi, n)
    r = np.where(part == 0, radius, radius * np.sqrt(rng.random(n)))
    z = np.where(part == 0, rng.uniform(-height / 2, height / 2, n),
                 np.where(part == 1, -height / 2, height / 2))
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def _sample_cone(n, rng, radius=1.0, height=2.0):
    slant = np.hypot(radius, height)
    lateral = np.pi * radius * slant
    base = np.pi * radius ** 2
    on_base = rng.random(n) < base / (lateral + base)
    theta = rng.uniform(0, 2 * np.pi, n)
    frac = np.sqrt(rng.random(n))  # distance from apex (lateral) or centre (base)
    r = radius * frac
    z = np.where(on_base, -height / 2, height / 2 - height * frac)
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def _sample_torus(n, rng, major=1.0, minor=0.35):
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        u = rng.uniform(0, 2 * np.pi, m)
        v = rng.uniform(0, 2 * np.pi, m)
        # area element is proportional to (major + minor cos v)
        keep = rng.random(m) * (major + minor) < major + minor * np.cos(v)
        u, v = u[keep], v[keep]
        ring = major + minor * np.cos(v)
        out = np.vstack([out, np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1)])
    return out[:n]


def _sample_plane(n, rng):
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    return np.column_stack([uv, np.zeros(n)])


SAMPLERS = {
    "sphere": _sample_sphere,
    "cube": _sample_cube,
    "cylinder": _sample_cylinder,
    "cone": _sample_cone,
    "torus": _sample_torus,
    "plane": _sample_plane,
}


def sample_shape(name: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if name not in SAMPLERS:
        raise ValueError(f"unknown shape {name!r}; expected one of {SHAPES}")
    return SAMPLERS[name](n, rng)


# ----------------------------------------------------------------------------
# datasets

@dataclass
class LabeledDataset:
    clouds: List[np.ndarray]
    labels: np.ndarray
    class_names: tuple
    split: str = "train"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.clouds) != len(self.labels):
            raise ValueError("clouds and labels differ in length")
        if len(self.class_names) < 2:
            raise ValueError("need at least 2 classes")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label out of range")

    def __len__(self):
        return len(self.clouds)

    def map(self, fn) -> "LabeledDataset":
        """New dataset with ``fn(cloud, index)`` applied to every cloud."""
        return LabeledDataset([fn(pc, i) for i, pc in enumerate(self.clouds)],
                              self.labels.copy(), self.class_names, self.split)

    def save(self, path):
        np.savez_compressed(path, points=np.stack(self.clouds), labels=self.labels,
                            class_names=np.array(self.class_names), split=np.array(self.split))

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        with np.load(path) as f:
            return cls(list(f["points"]), f["labels"], tuple(str(c) for c in f["class_names"]),
                       str(f["split"]))


@dataclass(frozen=True)
class DatasetConfig:
    classes: tuple = SHAPES
    per_class: int = 100
    t_points: int = 1024
    seed: int = 0
    # per-instance tilt about each axis, radians; keeps a canonical pose so
    # that full random rotation remains a real corruption
    max_tilt: float = np.pi / 12


def generate_synthetic_dataset(classes: Sequence[str] = SHAPES, per_class: int = 100,
                               t_points: int = 1024, seed: int = 0, split: str = "train",
                               max_tilt: float = np.pi / 12) -> LabeledDataset:
    """Balanced set of surface-sampled shapes, each randomly scaled per axis,
    tilted, translated and then normalized to the unit sphere.

    The train and test splits draw from disjoint streams of the same seed.
    """
    classes = tuple(classes)
    unknown = set(classes) - set(SHAPES)
    if unknown:
        raise ValueError(f"unknown shapes {sorted(unknown)}")
    if per_class < 2 or t_points < 64:
        raise ValueError("need per_class >= 2 and t_points >= 64")
    base = np.random.default_rng([seed, zlib.crc32(split.encode())])
    clouds, labels = [], []
    for label, name in enumerate(classes):
        for _ in range(per_class):
            item_seed = int(base.integers(2 ** 31))
            rng = np.random.default_rng(item_seed)
            pts = sample_shape(name, t_points, rng)
            pts = corrupt.augment_train(pts, item_seed)
            pts = corrupt.rotate_euler(pts, rng.uniform(-max_tilt, max_tilt, 3))
            clouds.append(normalize_unit_sphere(pts))
            labels.append(label)
    return LabeledDataset(clouds, np.array(labels), classes, split)


def synthetic_splits(cfg: DatasetConfig, test_per_class: Optional[int] = None):
    train = generate_synthetic_dataset(cfg.classes, cfg.per_class, cfg.t_points, cfg.seed,
                                       "train", cfg.max_tilt)
    test = generate_synthetic_dataset(cfg.classes, test_per_class or max(2, cfg.per_class // 2),
                                      cfg.t_points, cfg.seed, "test", cfg.max_tilt)
    return train, test


def load_modelnet(root, split: str, n_points: int = 1024, seed: int = 0,
                  classes: Optional[Sequence[str]] = None) -> LabeledDataset:
    """Read ``root/<class>/<split>/*.off`` meshes, sample and normalize each."""
    root = Path(root)
    names = tuple(classes) if classes else tuple(sorted(p.name for p in root.iterdir() if p.is_dir()))
    clouds, labels = [], []
    for label, name in enumerate(names):
        for i, path in enumerate(sorted((root / name / split).glob("*.off"))):
            pts = sample_mesh(load_off_mesh(path), n_points, seed=seed + i)
            clouds.append(normalize_unit_sphere(pts))
            labels.append(label)
    return LabeledDataset(clouds, np.array(labels), names, split)


def extract_features(dataset: LabeledDataset, gmm: GMM, variant: str = "full",
                     workers: int = 1, underflow: str = "nearest") -> np.ndarray:
    """Finalized 3DmFV of every cloud, flattened to one row per item."""
    mats = encode_batch(gmm, dataset.clouds, variant, finalize=True, workers=workers,
                        underflow=underflow)
    return mats.reshape(len(mats), -1)


# ----------------------------------------------------------------------------
# MLP

@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (256, 128)
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "sgd-momentum"
    deterministic: bool = True


@dataclass
class MlpModel:
    sizes: tuple
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    config: TrainConfig = field(default_factory=TrainConfig)
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count mismatch")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} has shape {w.shape}/{b.shape}, expected "
                                 f"{(self.sizes[i], self.sizes[i + 1])}")

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    def save(self, path):
        """``<path>.json`` metadata plus ``<path>.bin`` little-endian float64 weights."""
        path = Path(path)
        meta = {"format": "mfv3d-mlp/1", "sizes": list(self.sizes), "dtype": "<f8",
                "config": asdict(self.config), "loss_history": list(self.loss_history)}
        blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                        for w, b in zip(self.weights, self.biases) for a in (w, b))
        Path(f"{path}.bin").write_bytes(blob)
        Path(f"{path}.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "MlpModel":
        path = Path(path)
        meta = json.loads(Path(f"{path}.json").read_text())
        flat = np.frombuffer(Path(f"{path}.bin").read_bytes(), dtype="<f8")
        sizes = meta["sizes"]
        weights, biases, pos = [], [], 0
        for a, b in zip(sizes[:-1], sizes[1:]):
            weights.append(flat[pos:pos + a * b].reshape(a, b).astype(np.float64))
            pos += a * b
            biases.append(flat[pos:pos + b].astype(np.float64))
            pos += b
        if pos != len(flat):
            raise ShapeError("weight blob size does not match layer sizes")
        cfg = dict(meta["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        return cls(tuple(sizes), weights, biases, TrainConfig(**cfg), meta.get("loss_history", []))


def init_mlp(n_in: int, n_classes: int, hidden=(256, 128), seed: int = 0) -> MlpModel:
    """He-initialized hidden layers; the output layer starts at zero so the
    initial prediction is uniform."""
    rng = np.random.default_rng(seed)
    sizes = (n_in, *hidden, n_classes)
    weights, biases = [], []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        weights.append(np.zeros((a, b)) if last else rng.standard_normal((a, b)) * np.sqrt(2.0 / a))
        biases.append(np.zeros(b))
    return MlpModel(sizes, weights, biases)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: MlpModel, X):
    """Returns (logits, hidden activations including the input)."""
    acts = [X]
    h = X
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i < len(model.weights) - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            return z, acts


def loss_and_grads(model: MlpModel, X, y, weight_decay: float = 0.0):
    """Mean softmax cross-entropy and its gradients w.r.t. every weight and bias."""
    logits, acts = forward(model, X)
    n = len(X)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean()
    if weight_decay:
        loss += 0.5 * weight_decay * sum((w * w).sum() for w in model.weights)
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw, gb = [None] * len(model.weights), [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta + weight_decay * model.weights[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return loss, gw, gb


def _single_thread():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(1)


def train_mlp(X, y, n_classes: int, config: TrainConfig = TrainConfig()) -> MlpModel:
    """Mini-batch SGD with momentum on softmax cross-entropy.

    ``loss_history[0]`` is the loss before any update, entry ``e`` the loss
    on the full training set after epoch ``e``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    model = init_mlp(X.shape[1], n_classes, config.hidden, config.seed)
    model.config = config
    rng = np.random.default_rng([config.seed, 1])
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    mu = config.momentum if config.optimizer == "sgd-momentum" else 0.0
    lr = config.learning_rate
    with _single_thread() if config.deterministic else nullcontext():
        model.loss_history.append(float(loss_and_grads(model, X, y)[0]))
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(X))
            for start in range(0, len(X), config.batch_size):
                idx = order[start:start + config.batch_size]
                loss, gw, gb = loss_and_grads(model, X[idx], y[idx], config.weight_decay)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, lr)
                for i in range(len(model.weights)):
                    vel_w[i] = mu * vel_w[i] - lr * gw[i]
                    vel_b[i] = mu * vel_b[i] - lr * gb[i]
                    model.weights[i] += vel_w[i]
                    model.biases[i] += vel_b[i]
            full = float(loss_and_grads(model, X, y)[0])
            if not np.isfinite(full):
                raise DivergenceError(epoch, lr)
            model.loss_history.append(full)
    return model


def train_classifier(train: LabeledDataset, gmm: GMM, variant: str = "full",
                     config: TrainConfig = TrainConfig(), workers: int = 1) -> MlpModel:
    X = extract_features(train, gmm, variant, workers)
    return train_mlp(X, train.labels, len(train.class_names), config)


def predict(model: MlpModel, feature) -> np.ndarray:
    """Class probabilities for one feature vector (K,) or a batch (N, K)."""
    x = np.asarray(feature, dtype=np.float64)
    single = x.ndim == 1
    X = x[None] if single else x
    if X.ndim != 2 or X.shape[1] != model.sizes[0]:
        raise ShapeError(f"feature length {X.shape[-1]} does not match input size {model.sizes[0]}")
    probs = _softmax(forward(model, X)[0])
    return probs[0] if single else probs


def metrics_from_predictions(y_true, y_pred, n_classes: int) -> dict:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    counts = conf.sum(axis=1)
    per_class = np.divide(np.diag(conf), counts, out=np.zeros(n_classes), where=counts > 0)
    return {
        "accuracy": float(np.trace(conf) / max(conf.sum(), 1)),
        "per_class_accuracy": per_class.tolist(),
        "confusion": conf.tolist(),
    }


def evaluate_features(model: MlpModel, X, y) -> dict:
    pred = predict(model, X).argmax(axis=1)
    return metrics_from_predictions(y, pred, model.n_classes)


def evaluate(model: MlpModel, dataset: LabeledDataset, gmm: GMM, variant: str = "full",
             workers: int = 1) -> dict:
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    X = extract_features(dataset, gmm, variant, workers)
    return evaluate_features(model, X, dataset.labels)
