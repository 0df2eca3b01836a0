"""Fisher vector and 3DmFV encoding of point clouds against a GMM.

The per-point gradient terms for Gaussian k at point p_t are

    g_alpha = (gamma_t(k) - w_k) / sqrt(w_k)
    g_mu    = gamma_t(k) (p_t - mu_k) / (sigma_k sqrt(w_k))
    g_sigma = gamma_t(k) ((p_t - mu_k)^2 / sigma_k^2 - 1) / sqrt(2 w_k)

with the square taken per axis. The Fisher vector sums them over points;
3DmFV also keeps their per-Gaussian maxima and minima.
"""
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .errors import MisuseError, ShapeError
from .gmm import GMM, soft_assignment
from .pointcloud import as_points

FEATURES = ("alpha", "mu_x", "mu_y", "mu_z", "sigma_x", "sigma_y", "sigma_z")
FULL_ROWS = (tuple(f"sum:{f}" for f in FEATURES)
             + tuple(f"max:{f}" for f in FEATURES)
             + tuple(f"min:{f}" for f in FEATURES[1:]))
VARIANT_ROWS = {
    "full": FULL_ROWS,
    "fv-only": FULL_ROWS[:7],
    "ss": tuple(f"ss:{f}" for f in FEATURES),
    "max": FULL_ROWS[7:14],
    "min": FULL_ROWS[14:],
}
VARIANTS = tuple(VARIANT_ROWS)


@dataclass(frozen=True)
class FisherVector:
    """Fisher vector stored as a (K, 7) array of per-Gaussian blocks."""
    blocks: np.ndarray
    n_points: int
    t_normalized: bool
    finalized: bool = False

    @property
    def K(self) -> int:
        return self.blocks.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return self.blocks[:, 0]

    @property
    def mu(self) -> np.ndarray:
        return self.blocks[:, 1:4]

    @property
    def sigma(self) -> np.ndarray:
        return self.blocks[:, 4:7]

    def as_vector(self) -> np.ndarray:
        """Length-7K vector, one ``[G_alpha, G_mu, G_sigma]`` block per Gaussian."""
        return self.blocks.reshape(-1).copy()


@dataclass(frozen=True)
class Mfv:
    """Rows-by-K matrix of aggregated gradient statistics (20 x K when full)."""
    matrix: np.ndarray
    variant: str
    n_points: int
    finalized: bool = False
    grid_resolution: Optional[int] = None

    @property
    def rows(self) -> tuple:
        return VARIANT_ROWS[self.variant]

    @property
    def K(self) -> int:
        return self.matrix.shape[1]

    def row(self, name: str) -> np.ndarray:
        return self.matrix[self.rows.index(name)]


# ----------------------------------------------------------------------------
# per-point terms (reference numpy path)

def per_point_gradients(gmm: GMM, points, underflow="nearest") -> np.ndarray:
    """(T, K, 7) array of raw gradient terms, before any sum or 1/T scaling."""
    pts = as_points(points)
    gamma = soft_assignment(gmm, pts, underflow=underflow)
    sw = np.sqrt(gmm.weights)
    u = (pts[:, None, :] - gmm.means[None]) / gmm.sigmas[None, :, None]
    out = np.empty((len(pts), gmm.K, 7))
    out[:, :, 0] = (gamma - gmm.weights) / sw
    out[:, :, 1:4] = gamma[:, :, None] * u / sw[None, :, None]
    out[:, :, 4:7] = gamma[:, :, None] * (u * u - 1.0) / (np.sqrt(2.0) * sw)[None, :, None]
    return out


# ----------------------------------------------------------------------------
# aggregate statistics (compiled path)

@dataclass(frozen=True)
class _Stats:
    sum: np.ndarray  # (7, K)
    sq: np.ndarray
    max: np.ndarray
    min: np.ndarray
    n_points: int
    underflowed: int


def _statistics(gmm: GMM, points, underflow="nearest") -> _Stats:
    if underflow not in ("nearest", "zero"):
        raise ValueError(f"unknown underflow policy {underflow!r}")
    pts = np.ascontiguousarray(as_points(points))
    T, K = len(pts), gmm.K
    means = np.ascontiguousarray(gmm.means)
    gamma = np.empty((K, T))
    flags = np.empty(T, dtype=np.bool_)
    _kernels.responsibilities(pts, means, gmm.sigmas, gmm.weights,
                              underflow == "zero", gamma, flags)
    out = [np.empty((7, K)) for _ in range(4)]
    _kernels.aggregate(pts, means, gmm.sigmas, gmm.weights, gamma, *out)
    return _Stats(*out, n_points=T, underflowed=int(flags.sum()))


def encode_fv(gmm: GMM, points, apply_t_norm: bool = True, underflow="nearest") -> FisherVector:
    st = _statistics(gmm, points, underflow)
    blocks = st.sum.T.copy()
    if apply_t_norm:
        blocks /= st.n_points
    return FisherVector(blocks, st.n_points, t_normalized=apply_t_norm)


def _assemble(st: _Stats, variant: str) -> np.ndarray:
    T = st.n_points
    if variant == "full":
        return np.vstack([st.sum / T, st.max, st.min[1:]])
    if variant == "fv-only":
        return st.sum / T
    if variant == "ss":
        return st.sq / T
    if variant == "max":
        return st.max.copy()
    if variant == "min":
        return st.min[1:].copy()
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def encode_3dmfv(gmm: GMM, points, variant: str = "full", underflow="nearest",
                 require_grid: bool = False) -> Mfv:
    """Aggregate per-point terms with sum (divided by T), max and min.

    Extrema rows are not divided by T. With ``require_grid`` a GMM that was
    not built on a grid is rejected.
    """
    if variant not in VARIANT_ROWS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if require_grid and not gmm.is_grid:
        raise MisuseError("grid tensor output requires a grid-built GMM")
    st = _statistics(gmm, points, underflow)
    return Mfv(_assemble(st, variant), variant, st.n_points,
               grid_resolution=gmm.grid_resolution)


def _finalize_rows(mat: np.ndarray) -> np.ndarray:
    out = np.sign(mat) * np.sqrt(np.abs(mat))
    norms = np.sqrt((out * out).sum(axis=1, keepdims=True))
    np.divide(out, norms, out=out, where=norms > 0)
    return out


def finalize_normalization(rep):
    """Signed square root per entry, then L2-normalize each feature row over K.

    Rows that are entirely zero stay zero. Applying it twice is an error.
    """
    if rep.finalized:
        raise MisuseError("representation is already finalized")
    if isinstance(rep, FisherVector):
        return replace(rep, blocks=_finalize_rows(rep.blocks.T).T.copy(), finalized=True)
    if isinstance(rep, Mfv):
        return replace(rep, matrix=_finalize_rows(rep.matrix), finalized=True)
    raise TypeError(f"cannot finalize {type(rep).__name__}")


def sparsity(mfv: Mfv, threshold: float = 1e-8) -> float:
    """Fraction of near-zero entries among the point-geometry (mu, sigma) rows.

    Alpha rows are excluded: a Gaussian with no points still carries the
    constant ``-sqrt(w)`` there.
    """
    idx = [i for i, r in enumerate(mfv.rows) if not r.endswith("alpha")]
    return float(np.mean(np.abs(mfv.matrix[idx]) < threshold))


# ----------------------------------------------------------------------------
# grid layout and serialization

def to_grid_tensor(mfv: Mfv, gmm: GMM) -> np.ndarray:
    """Reshape to (rows, m, m, m) indexed ``[row, z, y, x]``; flattening undoes it."""
    if not gmm.is_grid:
        raise MisuseError("grid tensor output requires a grid-built GMM")
    m = gmm.grid_resolution
    if mfv.K != m ** 3:
        raise ShapeError(f"representation has K={mfv.K} columns, grid needs {m ** 3}")
    return mfv.matrix.reshape(mfv.matrix.shape[0], m, m, m)


def flatten_grid_tensor(tensor: np.ndarray) -> np.ndarray:
    return tensor.reshape(tensor.shape[0], -1)


def save_tensor(path, mfv: Mfv, gmm: GMM, dtype="float32", extra: Optional[dict] = None):
    """Write ``<path>`` as raw little-endian floats plus ``<path>.json`` sidecar."""
    path = Path(path)
    tensor = to_grid_tensor(mfv, gmm)
    dt = np.dtype(dtype).newbyteorder("<")
    meta = {
        "m": gmm.grid_resolution,
        "K": mfv.K,
        "variant": mfv.variant,
        "finalized": mfv.finalized,
        "dtype": dt.name,
        "shape": list(tensor.shape),
        "row_order": list(mfv.rows),
        "n_points": mfv.n_points,
    }
    if extra:
        meta.update(extra)
    _atomic_write(path, tensor.astype(dt).tobytes(order="C"))
    _atomic_write(Path(f"{path}.json"), (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())
    return meta


def load_tensor(path):
    """Read a tensor written by :func:`save_tensor`; returns (array, metadata)."""
    path = Path(path)
    meta = json.loads(Path(f"{path}.json").read_text())
    data = np.fromfile(path, dtype=np.dtype(meta["dtype"]).newbyteorder("<"))
    return data.reshape(meta["shape"]), meta


def _atomic_write(path: Path, payload: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


# ----------------------------------------------------------------------------
# batches

def encode_batch(gmm: GMM, clouds, variant="full", finalize=True, workers=1,
                 underflow="nearest") -> np.ndarray:
    """Encode many clouds into an (N, rows, K) array.

    Each cloud is independent, so the output does not depend on ``workers``.
    """
    def one(pc):
        rep = encode_3dmfv(gmm, pc, variant, underflow=underflow)
        return (finalize_normalization(rep) if finalize else rep).matrix

    clouds = list(clouds)
    if workers <= 1:
        mats = [one(pc) for pc in clouds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mats = list(pool.map(one, clouds))
    return np.stack(mats)
