"""Isotropic Gaussian mixtures: the uniform grid model and an EM-fitted model."""
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .pointcloud import as_points

LOG_2PI = np.log(2.0 * np.pi)
VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class GMM:
    """K isotropic Gaussians: ``weights`` (K,), ``means`` (K, 3), ``sigmas`` (K,).

    ``grid_resolution`` is set only for models built by :func:`build_grid_gmm`.
    """
    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray
    grid_resolution: Optional[int] = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        mu = np.array(self.means, dtype=np.float64).reshape(-1, 3)
        s = np.array(self.sigmas, dtype=np.float64).reshape(-1)
        if not (len(w) == len(mu) == len(s)) or len(w) == 0:
            raise ValueError("weights, means and sigmas must describe the same K >= 1 components")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(s <= 0) or not np.all(np.isfinite(mu)):
            raise ValueError("sigmas must be positive and means finite")
        if self.grid_resolution is not None and len(w) != self.grid_resolution ** 3:
            raise ValueError("grid_resolution inconsistent with K")
        for name, arr in (("weights", w), ("means", mu), ("sigmas", s)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def is_grid(self) -> bool:
        return self.grid_resolution is not None

    def to_dict(self) -> dict:
        d = {"K": self.K}
        if self.grid_resolution is not None:
            d["m"] = self.grid_resolution
        d["weights"] = self.weights.tolist()
        d["means"] = self.means.tolist()
        d["sigmas"] = self.sigmas.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GMM":
        gmm = cls(d["weights"], d["means"], d["sigmas"], d.get("m"))
        if gmm.K != d["K"]:
            raise ValueError("K does not match the component arrays")
        return gmm

    def to_json(self) -> str:
        # json uses repr for floats, which round-trips doubles exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GMM":
        return cls.from_dict(json.loads(text))


def grid_axis(m: int) -> np.ndarray:
    """Cell-centred lattice coordinates ``-1 + (2i+1)/m`` for ``i = 0..m-1``."""
    return -1.0 + (2.0 * np.arange(m) + 1.0) / m


def build_grid_gmm(m: int, sigma: Optional[float] = None) -> GMM:
    """Uniform m x m x m grid of equally weighted Gaussians with std ``1/m``.

    Gaussian ``k = i + m*j + m*m*l`` sits at ``(c_i, c_j, c_l)``, x fastest.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if sigma is None:
        sigma = 1.0 / m
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    c = grid_axis(m)
    zz, yy, xx = np.meshgrid(c, c, c, indexing="ij")
    means = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
    K = m ** 3
    return GMM(np.full(K, 1.0 / K), means, np.full(K, float(sigma)), grid_resolution=m)


# ----------------------------------------------------------------------------
# evaluation

def _sq_dists(gmm: GMM, pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - gmm.means[None, :, :]
    return np.einsum("tkd,tkd->tk", diff, diff)


def log_weighted_densities(gmm: GMM, points) -> np.ndarray:
    """``log(w_k u_k(p_t))`` as a (T, K) array."""
    pts = as_points(points)
    s2 = gmm.sigmas ** 2
    return (np.log(gmm.weights) - 1.5 * LOG_2PI - 3.0 * np.log(gmm.sigmas)
            - 0.5 * _sq_dists(gmm, pts) / s2)


def component_likelihoods(gmm: GMM, p) -> np.ndarray:
    """Per-component densities ``u_k(p)``; (K,) for one point, (T, K) for many."""
    single = np.ndim(p) == 1
    pts = as_points(p)
    logu = (-1.5 * LOG_2PI - 3.0 * np.log(gmm.sigmas)
            - 0.5 * _sq_dists(gmm, pts) / gmm.sigmas ** 2)
    u = np.exp(logu)
    return u[0] if single else u


def soft_assignment(gmm: GMM, p, underflow="nearest", return_underflow=False):
    """Posterior responsibilities ``gamma_t(k)``.

    Evaluated in log space. A point whose weighted densities all underflow to
    zero in double precision is handled by ``underflow``: ``"nearest"`` gives
    it entirely to the closest mean, ``"zero"`` drops it (all-zero row).
    With ``return_underflow`` the boolean (T,) underflow mask is also returned.
    """
    if underflow not in ("nearest", "zero"):
        raise ValueError(f"unknown underflow policy {underflow!r}")
    single = np.ndim(p) == 1
    pts = as_points(p)
    lw = log_weighted_densities(gmm, pts)
    lse = logsumexp(lw, axis=1, keepdims=True)
    gamma = np.exp(lw - lse)
    flagged = np.exp(lw.max(axis=1)) == 0.0
    if flagged.any():
        gamma[flagged] = 0.0
        if underflow == "nearest":
            nearest = _sq_dists(gmm, pts[flagged]).argmin(axis=1)
            gamma[np.flatnonzero(flagged), nearest] = 1.0
    if single:
        gamma, flagged = gamma[0], flagged[0]
    return (gamma, flagged) if return_underflow else gamma


def log_likelihood(gmm: GMM, points) -> float:
    """Total log-likelihood ``sum_t log u_lambda(p_t)``."""
    return float(logsumexp(log_weighted_densities(gmm, points), axis=1).sum())


# ----------------------------------------------------------------------------
# maximum likelihood fit

@dataclass
class EMDiagnostics:
    log_likelihoods: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    # (iteration, component) pairs that collapsed and were re-seeded
    reseeded: list = field(default_factory=list)


def _kmeanspp(pts, K, rng):
    centers = [pts[rng.integers(len(pts))]]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        idx = rng.choice(len(pts), p=d2 / total) if total > 0 else rng.integers(len(pts))
        centers.append(pts[idx])
        d2 = np.minimum(d2, ((pts - pts[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def fit_gmm_em(points, K: int, max_iters: int = 100, tol: float = 1e-6,
               seed: int = 0, return_diagnostics: bool = False):
    """Fit an isotropic-covariance GMM by expectation maximization.

    Seeding is k-means++ from ``seed``. Stops after ``max_iters`` M-steps or
    when the relative log-likelihood gain drops below ``tol``. A component
    whose variance falls below the floor, or which loses all mass, is
    re-seeded on a data point and listed in the diagnostics.
    """
    pts = as_points(points)
    T = len(pts)
    if K < 1 or T < K:
        raise ValueError(f"need 1 <= K <= T (K={K}, T={T})")
    rng = np.random.default_rng(seed)

    means = _kmeanspp(pts, K, rng)
    global_var = max(pts.var(axis=0).mean(), VARIANCE_FLOOR)
    d2 = ((pts[:, None, :] - means[None]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    weights = np.empty(K)
    var = np.empty(K)
    for k in range(K):
        members = labels == k
        weights[k] = members.sum() + 1.0
        var[k] = d2[members, k].mean() / 3.0 if members.any() else global_var
    weights /= weights.sum()
    var = np.maximum(var, VARIANCE_FLOOR)
    var[var <= VARIANCE_FLOOR] = global_var

    diag = EMDiagnostics()
    for it in range(max_iters + 1):
        gmm = GMM(weights, means, np.sqrt(var))
        lw = log_weighted_densities(gmm, pts)
        lse = logsumexp(lw, axis=1, keepdims=True)
        ll = float(lse.sum())
        diag.log_likelihoods.append(ll)
        if it > 0 and ll - diag.log_likelihoods[-2] < tol * abs(diag.log_likelihoods[-2]):
            diag.converged = True
            break
        if it == max_iters:
            break
        diag.n_iter = it + 1

        gamma = np.exp(lw - lse)
        nk = gamma.sum(axis=0)
        safe = np.maximum(nk, 1e-300)
        means = (gamma.T @ pts) / safe[:, None]
        sq = ((pts[:, None, :] - means[None]) ** 2).sum(axis=2)
        var = (gamma * sq).sum(axis=0) / (3.0 * safe)
        weights = nk / T

        collapsed = (var < VARIANCE_FLOOR) | (nk < 1e-8 * T)
        for k in np.flatnonzero(collapsed):
            far = np.min(sq, axis=1)
            idx = rng.choice(T, p=far / far.sum()) if far.sum() > 0 else rng.integers(T)
            means[k] = pts[idx]
            var[k] = global_var
            weights[k] = 1.0 / K
            diag.reseeded.append((it, int(k)))
        weights = np.maximum(weights, 1e-12)
        weights /= weights.sum()

    return (gmm, diag) if return_diagnostics else gmm
