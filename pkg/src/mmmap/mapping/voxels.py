"""Sparse log-odds occupancy grid with per-voxel semantics.

Cells live in parallel arrays sorted by packed voxel key. Semantic payloads
(label counts, embedding sums) are kept only for voxels that received a
labelled endpoint.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo
from .. import kernels

L_HIT = 0.85
L_MISS = -0.4
L_MIN = -2.0
L_MAX = 3.5


@dataclass
class Cell:
    log_odds: float
    label_hist: dict = field(default_factory=dict)
    embedding_sum: np.ndarray | None = None
    embedding_n: int = 0

    @property
    def embedding_mean(self):
        if not self.embedding_n:
            return None
        return self.embedding_sum / self.embedding_n


class VoxelGrid:
    def __init__(self, voxel_size=0.2, l_hit=L_HIT, l_miss=L_MISS, l_min=L_MIN, l_max=L_MAX):
        if not voxel_size > 0:
            raise ValueError("voxel_size must be > 0")
        self.voxel_size = float(voxel_size)
        self.l_hit, self.l_miss, self.l_min, self.l_max = l_hit, l_miss, l_min, l_max
        self.keys = np.zeros(0, dtype=np.int64)
        self.log_odds = np.zeros(0)
        self.label_hist = {}  # key -> Counter
        self.embedding_sum = {}  # key -> ndarray
        self.embedding_n = {}  # key -> int

    def __len__(self):
        return int(self.keys.shape[0])

    def lookup(self, keys):
        """Row of each key, or -1."""
        keys = np.asarray(keys, dtype=np.int64)
        if self.keys.size == 0:
            return np.full(keys.shape, -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.keys, keys), self.keys.size - 1)
        return np.where(self.keys[pos] == keys, pos, -1)

    def cell(self, ijk):
        key = int(kernels.pack_keys(np.asarray(ijk, dtype=np.int64).reshape(1, 3))[0])
        row = int(self.lookup([key])[0])
        if row < 0:
            return None
        return Cell(
            log_odds=float(self.log_odds[row]),
            label_hist=dict(self.label_hist.get(key, {})),
            embedding_sum=self.embedding_sum.get(key),
            embedding_n=int(self.embedding_n.get(key, 0)),
        )

    def index_of(self, point):
        return tuple(int(v) for v in kernels.cell_indices(np.asarray(point, float).reshape(1, 3),
                                                          self.voxel_size)[0])

    def occupied_keys(self):
        return self.keys[self.log_odds > 0]

    def occupied_centers(self):
        return (kernels.unpack_keys(self.occupied_keys()) + 0.5) * self.voxel_size

    def digest(self):
        """(occupied count, bounding box of occupied voxel centres or None)."""
        occ = self.occupied_centers()
        if occ.shape[0] == 0:
            return 0, None
        return int(occ.shape[0]), geo.aabb_from_points(occ)

    def apply_delta(self, keys, delta):
        """Add per-key log-odds deltas (unique, sorted keys) and clamp."""
        rows = self.lookup(keys)
        have = rows >= 0
        self.log_odds[rows[have]] = np.clip(self.log_odds[rows[have]] + delta[have],
                                            self.l_min, self.l_max)
        new = ~have
        if new.any():
            nk = keys[new]
            pos = np.searchsorted(self.keys, nk)
            self.keys = np.insert(self.keys, pos, nk)
            self.log_odds = np.insert(self.log_odds, pos, np.clip(delta[new], self.l_min, self.l_max))

    def add_semantics(self, key, label, embedding, count):
        if label is not None:
            self.label_hist.setdefault(key, Counter())[label] += count
        if embedding is not None:
            emb = np.asarray(embedding, dtype=float) * count
            if key in self.embedding_sum:
                self.embedding_sum[key] = self.embedding_sum[key] + emb
            else:
                self.embedding_sum[key] = emb
            self.embedding_n[key] = self.embedding_n.get(key, 0) + count

    def equals(self, other):
        if self.voxel_size != other.voxel_size or not np.array_equal(self.keys, other.keys):
            return False
        if not np.array_equal(self.log_odds, other.log_odds):
            return False
        if {k: dict(v) for k, v in self.label_hist.items()} != \
                {k: dict(v) for k, v in other.label_hist.items()}:
            return False
        if self.embedding_n != other.embedding_n or set(self.embedding_sum) != set(other.embedding_sum):
            return False
        return all(np.array_equal(v, other.embedding_sum[k]) for k, v in self.embedding_sum.items())


def update_voxel_grid(grid, points, pose, point_objects=None, objects=None, max_range=None):
    """Integrate one scan (sensor frame) taken from sensor pose ``pose``.

    Each endpoint voxel gains ``l_hit``; every voxel the ray crosses before it
    gains ``l_miss``. All deltas of the scan are summed per voxel and clamped
    once, so the result does not depend on point order. ``point_objects``
    gives an index into ``objects`` (``(label, embedding)`` pairs) or -1.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if max_range is not None and pts.shape[0]:
        keep = np.linalg.norm(pts, axis=1) <= max_range
        pts = pts[keep]
        if point_objects is not None:
            point_objects = np.asarray(point_objects)[keep]
    if pts.shape[0] == 0:
        return grid
    T = np.asarray(pose, dtype=float)
    ends = geo.transform_points(T, pts)
    origins = np.broadcast_to(T[:3, 3], ends.shape)
    free, end = kernels.traverse_voxels(origins, ends, grid.voxel_size)
    all_keys = np.concatenate([end, free])
    w = np.concatenate([np.full(end.size, grid.l_hit), np.full(free.size, grid.l_miss)])
    ukeys, inv = np.unique(all_keys, return_inverse=True)
    grid.apply_delta(ukeys, np.bincount(inv, weights=w, minlength=ukeys.size))
    if point_objects is not None and objects:
        obj = np.asarray(point_objects, dtype=np.int64)
        lab = obj >= 0
        if lab.any():
            k, o = end[lab], obj[lab]
            order = np.lexsort((o, k))
            k, o = k[order], o[order]
            first = np.flatnonzero(np.r_[True, (k[1:] != k[:-1]) | (o[1:] != o[:-1])])
            counts = np.diff(np.r_[first, k.size])
            for key, oi, c in zip(k[first].tolist(), o[first].tolist(), counts.tolist()):
                label, emb = objects[oi]
                grid.add_semantics(key, label, emb, c)
    return grid
