"""Immutable point samples and the exact counting queries the estimators run on.

All distances are Euclidean and computed with :func:`scipy.spatial.distance.cdist`
/ ``pdist``; the k-d tree is only used to prune candidates, and every answer is
re-checked against the exact distance so accelerated queries agree with a
brute-force scan.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

from .errors import InputError

# relative slack for k-d tree candidate search; exact filtering follows
_SEARCH_SLACK = 1e-9
# above this many pairs, pair counts are streamed instead of cached
_MAX_CACHED_PAIRS = 12_000_000
_BLOCK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class BoundingBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise InputError("lower and upper must be vectors of equal length")
        if np.any(lower > upper):
            raise InputError("bounding box needs lower <= upper on every axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))


class PointCloud:
    """A read-only sample of ``n`` points in ``R^d``.

    A flat sequence of numbers is read as ``n`` points on the line.
    """

    def __init__(self, points):
        arr = np.array(points, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise InputError(f"points must form an n x d array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError("a point cloud needs at least one point and one coordinate")
        if not np.all(np.isfinite(arr)):
            raise InputError("all coordinates must be finite")
        arr.setflags(write=False)
        self._points = arr
        self._tree = cKDTree(arr)

    def __repr__(self):
        return f"PointCloud(n={self.n}, ambient_dim={self.ambient_dim})"

    def __len__(self):
        return self.n

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return self._points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self._points.shape[1]

    def _as_query(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.ambient_dim:
            raise InputError(
                f"query has {x.shape[0]} coordinates, cloud lives in R^{self.ambient_dim}"
            )
        return x

    @staticmethod
    def _check_radius(r):
        if not (r > 0 and math.isfinite(r)):
            raise InputError(f"radius must be positive and finite, got {r}")

    def _candidates(self, x: np.ndarray, r: float) -> np.ndarray:
        idx = self._tree.query_ball_point(x, r * (1.0 + _SEARCH_SLACK))
        return np.asarray(idx, dtype=np.intp)

    def count_within(self, x, r: float, strict: bool = False) -> int:
        """Number of sample points at distance <= r from ``x`` (< r when ``strict``)."""
        x = self._as_query(x)
        self._check_radius(r)
        idx = self._candidates(x, r)
        if idx.size == 0:
            return 0
        dist = cdist(x[None, :], self._points[idx])[0]
        return int(np.count_nonzero(dist < r if strict else dist <= r))

    @cached_property
    def _sorted_pair_distances(self) -> np.ndarray:
        dist = np.sort(pdist(self._points))
        dist.setflags(write=False)
        return dist

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    def pair_counts(self, radii, strict: bool = True) -> np.ndarray:
        """Unordered pair counts ``#{i<j : |X_i - X_j| < r}`` for every r in ``radii``."""
        if self.n < 2:
            raise InputError("pair counts need at least two points")
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        for r in radii:
            self._check_radius(r)
        side = "left" if strict else "right"
        if self.n_pairs <= _MAX_CACHED_PAIRS:
            return np.searchsorted(self._sorted_pair_distances, radii, side=side).astype(np.int64)
        counts = np.zeros(radii.shape, dtype=np.int64)
        for start, block in self._row_blocks():
            dist = cdist(block, self._points)
            rows = np.arange(block.shape[0])[:, None]
            cols = np.arange(self.n)[None, :]
            upper = cols > rows + start
            for k, r in enumerate(radii):
                hit = dist < r if strict else dist <= r
                counts[k] += np.count_nonzero(hit & upper)
        return counts

    def count_pairs_within(self, r: float) -> int:
        """Number of unordered pairs at distance strictly below ``r``."""
        return int(self.pair_counts([r], strict=True)[0])

    def _row_blocks(self):
        step = max(1, _BLOCK_ELEMENTS // max(self.n, 1))
        for start in range(0, self.n, step):
            yield start, self._points[start:start + step]

    def neighbor_counts(self, radii, strict: bool = False) -> np.ndarray:
        """``(n, m)`` matrix: entry ``[i, k]`` counts points within ``radii[k]`` of ``X_i``.

        The centre point itself is included, so every entry is at least 1 when
        ``strict`` is false.
        """
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        for r in radii:
            self._check_radius(r)
        out = np.empty((self.n, radii.size), dtype=np.int64)
        for start, block in self._row_blocks():
            dist = cdist(block, self._points)
            for k, r in enumerate(radii):
                hit = dist < r if strict else dist <= r
                out[start:start + block.shape[0], k] = np.count_nonzero(hit, axis=1)
        return out

    def greedy_separated(self, r: float) -> list[int]:
        """Indices of a maximal r-separated subset, built greedily in index order.

        ``X_i`` is accepted when its distance to every accepted point is >= r.
        Each rejected point lies at distance < r from some accepted one.
        """
        self._check_radius(r)
        covered = np.zeros(self.n, dtype=bool)
        accepted = []
        for i in range(self.n):
            if covered[i]:
                continue
            accepted.append(i)
            idx = self._candidates(self._points[i], r)
            dist = cdist(self._points[i][None, :], self._points[idx])[0]
            covered[idx[dist < r]] = True
        return accepted

    def box_count(self, r: float) -> int:
        """Occupied cells of a side-``r`` grid anchored at the coordinate-wise minimum."""
        self._check_radius(r)
        cells = np.floor((self._points - self._points.min(axis=0)) / r).astype(np.int64)
        return int(np.unique(cells, axis=0).shape[0])

    def bounding_box(self, margin: float = 0.0) -> BoundingBox:
        if margin < 0:
            raise InputError("margin must be nonnegative")
        return BoundingBox(self._points.min(axis=0) - margin, self._points.max(axis=0) + margin)

    def diameter(self) -> float:
        if self.n < 2:
            return 0.0
        if self.n_pairs <= _MAX_CACHED_PAIRS:
            return float(self._sorted_pair_distances[-1])
        return max(float(cdist(block, self._points).max()) for _, block in self._row_blocks())

    def nearest_distance(self, queries) -> np.ndarray:
        """Distance from each query point to its closest sample point."""
        q = np.asarray(queries, dtype=float)
        if q.ndim != 2 or q.shape[1] != self.ambient_dim:
            raise InputError(f"queries must be an (m, {self.ambient_dim}) array")
        dist, _ = self._tree.query(q, k=1)
        return np.asarray(dist, dtype=float)

    def transformed(self, scale: float = 1.0, shift=None, rotation=None) -> "PointCloud":
        """New cloud ``scale * X @ rotation.T + shift``."""
        pts = self._points * scale
        if rotation is not None:
            pts = pts @ np.asarray(rotation, dtype=float).T
        if shift is not None:
            pts = pts + np.asarray(shift, dtype=float)
        return PointCloud(pts)


def load_csv(path) -> PointCloud:
    """Read one point per row; a non-numeric first row is treated as a header."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such input: {path}")
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                if lineno == 0 and not rows:
                    continue
                raise InputError(f"{path}:{lineno + 1}: non-numeric value in {row!r}")
    if not rows:
        raise InputError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise InputError(f"{path}: rows have differing numbers of columns")
    return PointCloud(rows)


def save_csv(cloud: PointCloud, path, header: bool = False) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{i}" for i in range(cloud.ambient_dim)])
        for row in cloud.points:
            writer.writerow([repr(float(v)) for v in row])
