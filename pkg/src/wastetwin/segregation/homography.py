"""Planar pixel-to-world calibration via the normalized direct linear transform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_DEGENERACY_RTOL = 1e-9
_DET_RTOL = 1e-12
_HORIZON_EPS = 1e-12


class InputError(ValueError):
    """Too few correspondences or malformed points."""


class DegeneracyError(ValueError):
    """Correspondence configuration does not determine a homography."""


class HorizonError(ValueError):
    """Mapped point lies on the plane at infinity."""


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so the bottom-right entry is 1."""

    matrix: np.ndarray
    reprojection_rms: float = 0.0

    def __post_init__(self):
        H = np.asarray(self.matrix, dtype=float)
        if H.shape != (3, 3):
            raise InputError("homography matrix must be 3x3")
        if abs(H[2, 2]) < _HORIZON_EPS * np.linalg.norm(H):
            raise DegeneracyError("cannot normalize: bottom-right entry is ~0")
        H = H / H[2, 2]
        scale = np.linalg.norm(H) / np.sqrt(3.0)
        if abs(np.linalg.det(H)) < _DET_RTOL * scale**3:
            raise DegeneracyError("homography is numerically singular")
        object.__setattr__(self, "matrix", H)


def _normalization(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 with mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    dist = np.linalg.norm(points - centroid, axis=1).mean()
    scale = np.sqrt(2.0) / dist if dist > 0 else 1.0
    return np.array([
        [scale, 0.0, -scale * centroid[0]],
        [0.0, scale, -scale * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def fit_homography(pixels: np.ndarray, world: np.ndarray) -> Homography:
    """Least-squares homography mapping pixel points onto world points.

    Normalized DLT: both point sets are conditioned by a similarity, the
    stacked 2n x 9 system is solved by SVD, and the result is denormalized.
    Degenerate configurations (e.g. collinear points) leave the nullspace
    dimension above one and raise instead of returning garbage.
    """
    src = np.atleast_2d(np.asarray(pixels, dtype=float))
    dst = np.atleast_2d(np.asarray(world, dtype=float))
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise InputError("pixels and world must both be (n, 2)")
    n = src.shape[0]
    if n < 4:
        raise InputError(f"need at least 4 correspondences, got {n}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise InputError("correspondences must be finite")

    T_src = _normalization(src)
    T_dst = _normalization(dst)
    src_h = np.hstack([src, np.ones((n, 1))]) @ T_src.T
    dst_h = np.hstack([dst, np.ones((n, 1))]) @ T_dst.T

    A = np.zeros((2 * n, 9))
    x, y = src_h[:, 0], src_h[:, 1]
    u, v = dst_h[:, 0], dst_h[:, 1]
    A[0::2, 0:3] = src_h
    A[0::2, 6:9] = -u[:, None] * src_h
    A[1::2, 3:6] = src_h
    A[1::2, 6:9] = -v[:, None] * src_h

    _, s, Vt = np.linalg.svd(A)
    if s[-2] <= _DEGENERACY_RTOL * s[0]:
        raise DegeneracyError("degenerate correspondences: solution not unique")
    H_norm = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(T_dst) @ H_norm @ T_src

    h = Homography(H)
    mapped = apply_many(h, src)
    rms = float(np.sqrt(np.mean(np.sum((mapped - dst) ** 2, axis=1))))
    return Homography(h.matrix, reprojection_rms=rms)


def pixel_to_world(h: Homography, pixel: tuple[float, float]) -> tuple[float, float]:
    """Projective application with perspective divide."""
    u, v = float(pixel[0]), float(pixel[1])
    H = h.matrix
    w = H[2, 0] * u + H[2, 1] * v + H[2, 2]
    if abs(w) < _HORIZON_EPS:
        raise HorizonError(f"pixel ({u}, {v}) maps to the horizon")
    x = (H[0, 0] * u + H[0, 1] * v + H[0, 2]) / w
    y = (H[1, 0] * u + H[1, 1] * v + H[1, 2]) / w
    return (x, y)


def apply_many(h: Homography, pixels: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pixels, dtype=float))
    hom = np.hstack([pts, np.ones((pts.shape[0], 1))]) @ h.matrix.T
    w = hom[:, 2]
    if np.any(np.abs(w) < _HORIZON_EPS):
        raise HorizonError("some pixels map to the horizon")
    return hom[:, :2] / w[:, None]
