"""Region of interest, anchor grids and the covering radius."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class RegionOfInterest:
    """Axis-aligned box in feature space. Defaults: ``y`` in [-0.1, 0.1], ``dy`` in [-0.8, 0.8]."""

    lower: tuple[float, ...] = (-0.1, -0.8)
    upper: tuple[float, ...] = (0.1, 0.8)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not lo:
            raise ConfigurationError("region bounds must have equal, non-zero length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ConfigurationError("region needs lower < upper in every dimension")

    @property
    def dim(self):
        return len(self.lower)

    @property
    def widths(self):
        return np.subtract(self.upper, self.lower)

    @property
    def center(self):
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2.0

    def contains(self, points):
        p = np.atleast_2d(points)
        return np.all((p >= np.asarray(self.lower)) & (p <= np.asarray(self.upper)), axis=1)

    def translated(self, offset):
        off = np.asarray(offset, dtype=float)
        return RegionOfInterest(tuple(np.add(self.lower, off)), tuple(np.add(self.upper, off)))


@dataclass(frozen=True)
class AnchorGrid:
    points: np.ndarray
    counts: tuple[int, ...]

    @property
    def m(self):
        return self.points.shape[0]


def _grid(region, counts):
    counts = tuple(int(c) for c in counts)
    if len(counts) != region.dim:
        raise ConfigurationError("need one count per region dimension")
    if min(counts) < 2:
        raise ConfigurationError("at least 2 points per dimension")
    axes = [np.linspace(lo, hi, c) for lo, hi, c in zip(region.lower, region.upper, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh]), counts


def build_anchor_grid(region: RegionOfInterest = RegionOfInterest(), counts=(5, 5)):
    """Equally spaced Cartesian grid including both endpoints of every interval."""
    points, counts = _grid(region, counts)
    return AnchorGrid(points, counts)


def grid_spacing(region, counts):
    return region.widths / (np.asarray(counts) - 1)


def covering_radius(data, region: RegionOfInterest = RegionOfInterest(), eval_counts=(101, 101)):
    """Largest distance from a point of ``region`` to the nearest data point.

    The maximum over the region is taken on a dense ``eval_counts`` grid.
    Returns ``(radius, center)`` where ``center`` attains it.
    """
    features = np.asarray(getattr(data, "features", data), dtype=float)
    features = features[np.all(np.isfinite(features), axis=1)] if features.size else features
    if features.size == 0:
        raise DomainError("covering radius of an empty dataset")
    grid, _ = _grid(region, eval_counts)
    dist, _ = cKDTree(features).query(grid)
    i = int(np.argmax(dist))
    return float(dist[i]), grid[i]
