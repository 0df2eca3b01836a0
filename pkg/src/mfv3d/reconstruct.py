"""Analytic inversion of Fisher vector components.

Both inversions read the responsibility mass of Gaussian k out of its alpha
component, ``sum_t gamma_t(k) = T sqrt(w) (G_alpha + sqrt(w))`` for a
T-normalized vector, and the gamma-weighted mean offset of its points from
``G_mu``. A single point is that offset; a plane seen by one Gaussian has
the offset along its normal at the plane's local distance.
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from .encoder import FisherVector
from .errors import DegeneratePlaneError, MisuseError, NoPointError
from .gmm import GMM

MIN_PLANE_POINTS = 30.0
DEGENERATE_NORM = 1e-6


@dataclass(frozen=True)
class PlaneParams:
    normal: np.ndarray  # unit (a, b, c)
    rho: float  # signed distance from the global origin
    rho0: float  # distance from the Gaussian centre along the normal, >= 0
    gaussian_index: int
    t_k_estimate: float

    def to_dict(self) -> dict:
        return {"normal": [float(v) for v in self.normal], "rho": float(self.rho),
                "rho0": float(self.rho0), "gaussian_index": int(self.gaussian_index),
                "t_k_estimate": float(self.t_k_estimate)}


def _check_raw(fv: FisherVector):
    if fv.finalized:
        raise MisuseError("inversion needs the un-finalized Fisher vector")


def _mass_term(fv: FisherVector, gmm: GMM, k: int) -> float:
    # G_alpha + sqrt(w) == sum_t gamma_t(k) / (sqrt(w) * scale), scale = T or 1
    return float(fv.alpha[k] + np.sqrt(gmm.weights[k]))


def recover_single_point(fv: FisherVector, gmm: GMM, k: int) -> np.ndarray:
    """Location of a lone point that Gaussian k owns.

    Returns ``mu_k + sigma_k G_mu / (G_alpha + sqrt(w_k))``; with K = 1 the
    denominator is 1 and this is ``sigma G_mu + mu``. Works on T-normalized
    and raw vectors alike.
    """
    _check_raw(fv)
    mass = _mass_term(fv, gmm, k)
    if mass <= 1e-12 * np.sqrt(gmm.weights[k]):
        raise NoPointError(f"Gaussian {k} carries no responsibility mass")
    return gmm.means[k] + gmm.sigmas[k] * fv.mu[k] / mass


def estimate_points_per_gaussian(fv: FisherVector, gmm: GMM, k: int, total_t: int,
                                 return_clamped: bool = False):
    """``T sqrt(w_k) (G_alpha,k + sqrt(w_k))``, the soft point count of Gaussian k.

    Rounding can push the estimate for an empty Gaussian slightly below zero;
    it is clamped to 0 and, with ``return_clamped``, reported.
    """
    _check_raw(fv)
    if not fv.t_normalized:
        raise MisuseError("the point-count estimate expects a T-normalized vector")
    est = total_t * np.sqrt(gmm.weights[k]) * _mass_term(fv, gmm, k)
    clamped = est < 0
    est = max(est, 0.0)
    return (est, clamped) if return_clamped else est


def recover_plane(fv: FisherVector, gmm: GMM, k: int, total_t: int,
                  min_points: float = MIN_PLANE_POINTS) -> PlaneParams:
    """Plane through the points seen by Gaussian k, oriented so ``rho0 >= 0``."""
    t_k = estimate_points_per_gaussian(fv, gmm, k, total_t)
    if t_k < min_points:
        raise NoPointError(f"Gaussian {k} sees ~{t_k:.1f} points, fewer than {min_points}")
    g_mu = fv.mu[k]
    norm = float(np.linalg.norm(g_mu))
    if norm < DEGENERATE_NORM:
        raise DegeneratePlaneError(
            f"G_mu of Gaussian {k} vanishes; the plane passes through its centre", rho0=0.0)
    normal = g_mu / norm
    rho0 = gmm.sigmas[k] * norm / _mass_term(fv, gmm, k)
    rho = rho0 + float(gmm.means[k] @ normal)
    return PlaneParams(normal, float(rho), float(rho0), int(k), float(t_k))


def recover_planes(fv: FisherVector, gmm: GMM, total_t: int,
                   min_points: float = MIN_PLANE_POINTS) -> List[PlaneParams]:
    """Planes from every Gaussian with enough mass; degenerate ones are skipped."""
    out = []
    for k in range(gmm.K):
        try:
            out.append(recover_plane(fv, gmm, k, total_t, min_points))
        except (NoPointError, DegeneratePlaneError):
            continue
    return out


def plane_errors(plane: PlaneParams, normal, rho):
    """(angle in degrees, |rho error|) after aligning the sign with the reference."""
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    n, r = plane.normal, plane.rho
    if n @ normal < 0:
        n, r = -n, -r
    angle = np.degrees(np.arccos(np.clip(n @ normal, -1.0, 1.0)))
    return float(angle), float(abs(r - rho))


def sample_plane_patch(normal, rho, n: int, seed: int, method: str = "stratified",
                       half_extent: float = 1.0) -> np.ndarray:
    """Uniform samples of the plane ``normal . p = rho`` inside the cube ``[-h, h]^3``.

    ``"random"`` draws i.i.d. points; ``"stratified"`` puts one jittered point
    in each cell of a regular grid over the patch. When the patch is a
    rectangle in the chosen in-plane basis the stratified count is exactly
    ``g*g`` with ``g = round(sqrt(n))``; otherwise accepted points are
    subsampled to ``n``.
    """
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    axis = np.zeros(3)
    axis[np.argmin(np.abs(normal))] = 1.0
    e1 = axis - (axis @ normal) * normal
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    origin = rho * normal
    h = half_extent

    # 2D bounding box of the patch from the cube-edge intersections
    corners = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)])
    side = corners @ normal - rho
    pts2 = []
    for i in range(8):
        for j in range(i + 1, 8):
            if np.count_nonzero(corners[i] != corners[j]) != 1:
                continue
            a, b = side[i], side[j]
            if a == 0:
                p = corners[i]
            elif a * b < 0:
                p = corners[i] + (corners[j] - corners[i]) * a / (a - b)
            else:
                continue
            pts2.append([(p - origin) @ e1, (p - origin) @ e2])
    if not pts2:
        raise ValueError("plane does not cross the cube")
    pts2 = np.array(pts2)
    lo, hi = pts2.min(axis=0), pts2.max(axis=0)

    rng = np.random.default_rng(seed)

    def lift(uv):
        return origin + uv[:, :1] * e1 + uv[:, 1:] * e2

    def inside(p):
        return np.all(np.abs(p) <= h * (1 + 1e-12), axis=1)

    if method == "random":
        out = np.empty((0, 3))
        while len(out) < n:
            uv = lo + (hi - lo) * rng.random((2 * (n - len(out)) + 16, 2))
            p = lift(uv)
            out = np.vstack([out, p[inside(p)]])
        return out[:n]
    if method != "stratified":
        raise ValueError(f"unknown method {method!r}")
    g = max(1, int(round(np.sqrt(n))))
    while True:
        ii, jj = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
        cells = np.stack([ii.ravel(), jj.ravel()], axis=1)
        uv = lo + (hi - lo) * (cells + rng.random(cells.shape)) / g
        p = lift(uv)
        p = p[inside(p)]
        if len(p) >= n:
            break
        g += max(1, g // 10)
    if len(p) > n:
        p = p[np.sort(rng.choice(len(p), size=n, replace=False))]
    return p
