"""Seeded corruptions for robustness tests and the training-time augmentation.

Every transform draws from its own generator derived from ``(seed, name)``,
so the same seed used for two different transforms gives unrelated streams.
"""
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError
from .pointcloud import as_points

SCALE_RANGE = (0.66, 1.5)
TRANSLATE_RANGE = (-0.2, 0.2)


def _rng(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode())])


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _check_ratio(ratio):
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"ratio must be in [0, 1), got {ratio}")


def delete_uniform(points, ratio: float, seed: int) -> np.ndarray:
    """Keep ``round(T (1 - ratio))`` points chosen without replacement, in original order."""
    pts = as_points(points)
    _check_ratio(ratio)
    keep = _round_half_up(len(pts) * (1.0 - ratio))
    if keep == 0:
        raise EmptyInputError("deletion would remove every point")
    idx = np.sort(_rng(seed, "delete_uniform").choice(len(pts), size=keep, replace=False))
    return pts[idx]


def delete_region(points, ratio: float, seed: int) -> np.ndarray:
    """Remove a random point together with its nearest neighbours (``round(T ratio)`` in all)."""
    pts = as_points(points)
    _check_ratio(ratio)
    n_remove = _round_half_up(len(pts) * ratio)
    if n_remove == 0:
        return pts.copy()
    if n_remove >= len(pts):
        raise EmptyInputError("deletion would remove every point")
    center = pts[_rng(seed, "delete_region").integers(len(pts))]
    d2 = ((pts - center) ** 2).sum(axis=1)
    order = np.argsort(d2, kind="stable")
    return pts[np.sort(order[n_remove:])]


def sample_unit_ball(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.random((n, 1)) ** (1.0 / 3.0)


def insert_outliers(points, count: int, seed: int) -> np.ndarray:
    """Append ``count`` points drawn uniformly from the unit ball."""
    pts = as_points(points)
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return pts.copy()
    return np.vstack([pts, sample_unit_ball(count, _rng(seed, "insert_outliers"))])


def perturb_gaussian(points, sigma: float, seed: int, bound=None) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2 I) offsets, each clipped to norm ``bound`` (default 3 sigma)."""
    pts = as_points(points)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return pts.copy()
    if bound is None:
        bound = 3.0 * sigma
    if not bound > 0:
        raise ValueError("bound must be positive")
    noise = sigma * _rng(seed, "perturb").standard_normal(pts.shape)
    norms = np.linalg.norm(noise, axis=1, keepdims=True)
    noise *= np.minimum(1.0, bound / np.maximum(norms, 1e-300))
    return pts + noise


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation matrix from a uniformly distributed unit quaternion (Shoemake)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    w, x, y, z = (a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2),
                  b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3))
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def euler_rotation(angles) -> np.ndarray:
    """``Rz @ Ry @ Rx`` for angles (x, y, z) in radians."""
    ax, ay, az = angles
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def rotate_random(points, seed: int) -> np.ndarray:
    return as_points(points) @ random_rotation(_rng(seed, "rotate")).T


def rotate_euler(points, angles) -> np.ndarray:
    return as_points(points) @ euler_rotation(angles).T


def augment_train(points, seed: int, return_params: bool = False):
    """Random per-axis scale in [0.66, 1.5] and translation in [-0.2, 0.2]."""
    pts = as_points(points)
    rng = _rng(seed, "augment")
    scale = rng.uniform(*SCALE_RANGE, size=3)
    shift = rng.uniform(*TRANSLATE_RANGE, size=3)
    out = pts * scale + shift
    return (out, scale, shift) if return_params else out


# ----------------------------------------------------------------------------
# textual specs: "kind=perturb,sigma=0.01,seed=3"

_PARAMS = {
    "delete_uniform": ("ratio",),
    "delete_region": ("ratio",),
    "outliers": ("count",),
    "perturb": ("sigma", "bound"),
    "rotate": (),
    "augment": (),
}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        unknown = set(self.params) - set(_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"{self.kind} does not take {sorted(unknown)}")
        if "ratio" in self.params:
            _check_ratio(self.params["ratio"])
        if self.params.get("sigma", 0) < 0:
            raise ValueError("sigma must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "CorruptionSpec":
        fields = {}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError(f"expected key=value, got {part!r}")
            fields[key.strip()] = value.strip()
        if "kind" not in fields:
            raise ValueError("corruption spec needs kind=...")
        kind = fields.pop("kind")
        seed = int(fields.pop("seed", 0))
        params = {k: (int(v) if k == "count" else float(v)) for k, v in fields.items()}
        return cls(kind, params, seed)

    def __str__(self):
        parts = [f"kind={self.kind}"]
        parts += [f"{k}={self.params[k]!r}" for k in sorted(self.params)]
        parts.append(f"seed={self.seed}")
        return ",".join(parts)

    def apply(self, points) -> np.ndarray:
        p = self.params
        if self.kind == "delete_uniform":
            return delete_uniform(points, p.get("ratio", 0.0), self.seed)
        if self.kind == "delete_region":
            return delete_region(points, p.get("ratio", 0.0), self.seed)
        if self.kind == "outliers":
            return insert_outliers(points, p.get("count", 0), self.seed)
        if self.kind == "perturb":
            return perturb_gaussian(points, p.get("sigma", 0.0), self.seed, p.get("bound"))
        if self.kind == "rotate":
            return rotate_random(points, self.seed)
        return augment_train(points, self.seed)
