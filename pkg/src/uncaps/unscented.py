"""Sigma-point generation and unscented propagation of a scalar function.

For a Gaussian N(mean, cov) in d dimensions, 2d+1 sigma points are placed at
the mean and at mean +/- the rows of the matrix square root of (d+k)*cov.
Propagating a function through the points with the matching weights gives the
transformed mean; that is the only moment used here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

_SYM_TOL = 1e-10


@dataclass(frozen=True)
class UTConfig:
    """Scale coefficient and dimensionality for sigma-point placement."""

    k: float = 2.0
    dimension: int = 1

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if self.dimension + self.k <= 0.0:
            raise ValueError(f"d + k must be positive, got {self.dimension + self.k}")


@dataclass(frozen=True)
class SigmaPointSet:
    """2d+1 points (center first, then +rows, then -rows) with their weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if points.shape[0] != weights.shape[0]:
            raise ValueError("points and weights must have equal counts")
        if points.shape[0] != 2 * points.shape[1] + 1:
            raise ValueError("expected exactly 2d+1 sigma points")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


def ut_weights(dimension: int, k: float) -> np.ndarray:
    """Center weight k/(d+k) followed by 2d side weights 1/(2(d+k))."""
    if dimension + k <= 0.0:
        raise ValueError(f"d + k must be positive, got {dimension + k}")
    w = np.full(2 * dimension + 1, 1.0 / (2.0 * (dimension + k)))
    w[0] = k / (dimension + k)
    return w


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; fast diagonal path, else spectral."""
    diag = np.diag(cov)
    if np.count_nonzero(cov - np.diag(diag)) == 0:
        if np.any(diag < -_SYM_TOL * max(1.0, float(np.max(np.abs(diag))))):
            raise ValueError("covariance must be positive semidefinite")
        return np.diag(np.sqrt(np.maximum(diag, 0.0)))
    eigvals, eigvecs = np.linalg.eigh(cov)
    floor = -_SYM_TOL * max(1.0, float(eigvals[-1]))
    if eigvals[0] < floor:
        raise ValueError(
            f"covariance must be positive semidefinite (min eigenvalue {eigvals[0]})")
    return (eigvecs * np.sqrt(np.maximum(eigvals, 0.0))) @ eigvecs.T


def sigma_points(mean, covariance, k: float = 2.0) -> SigmaPointSet:
    """Place 2d+1 sigma points for N(mean, covariance) with scale k.

    Raises ValueError for a non-symmetric or non-PSD covariance, or d+k <= 0.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise ValueError(f"covariance shape {cov.shape} does not match dimension {d}")
    if d + k <= 0.0:
        raise ValueError(f"d + k must be positive, got {d + k}")
    scale = float(np.max(np.abs(cov))) if cov.size else 0.0
    if np.max(np.abs(cov - cov.T)) > _SYM_TOL * max(1.0, scale):
        raise ValueError("covariance must be symmetric")
    cov = 0.5 * (cov + cov.T)
    root = _psd_sqrt((d + k) * cov)
    points = np.empty((2 * d + 1, d))
    points[0] = mean
    points[1:d + 1] = mean[None, :] + root
    points[d + 1:] = mean[None, :] - root
    return SigmaPointSet(points, ut_weights(d, k))


def isotropic_sigma_points(mean, variance: float, k: float = 2.0) -> SigmaPointSet:
    """Sigma points for the isotropic covariance I*variance without matrix work."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if variance < 0.0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    d = mean.shape[0]
    if d + k <= 0.0:
        raise ValueError(f"d + k must be positive, got {d + k}")
    spread = np.sqrt((d + k) * variance)
    points = np.tile(mean, (2 * d + 1, 1))
    idx = np.arange(d)
    points[1 + idx, idx] += spread
    points[1 + d + idx, idx] -= spread
    return SigmaPointSet(points, ut_weights(d, k))


def unscented_mean(f: Callable[[np.ndarray], float], sp: SigmaPointSet) -> float:
    """Weighted sum of f over the sigma points (the transformed mean)."""
    values = np.array([float(f(p)) for p in sp.points])
    return float(sp.weights @ values)
