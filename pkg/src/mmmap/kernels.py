"""Hot numeric kernels: ray casting, voxel traversal, grid-hash neighbour
search and connected components.

Every public function dispatches to a numba kernel (``_*_nb``) or a
vectorised numpy fallback (``_*_np``) depending on ``_backend.USE_NUMBA``.
Both paths return identical results; ``tests/test_kernels.py`` checks this.
"""
from __future__ import annotations

import numpy as np

from . import _backend
from ._backend import njit

KEY_OFFSET = 1 << 20
KEY_MASK = (1 << 21) - 1
RAY_EPS = 1e-9

BOX = 0
SPHERE = 1

_OFFSETS = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
    dtype=np.int64,
)


# -- voxel keys -----------------------------------------------------------


def pack_keys(ijk):
    ijk = np.asarray(ijk, dtype=np.int64).reshape(-1, 3) + KEY_OFFSET
    return (ijk[:, 0] << 42) | (ijk[:, 1] << 21) | ijk[:, 2]


def unpack_keys(keys):
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((keys.shape[0], 3), dtype=np.int64)
    out[:, 0] = (keys >> 42) & KEY_MASK
    out[:, 1] = (keys >> 21) & KEY_MASK
    out[:, 2] = keys & KEY_MASK
    return out - KEY_OFFSET


def cell_indices(points, cell):
    return np.floor(np.asarray(points, dtype=float) / cell).astype(np.int64)


@njit
def _pack1(i, j, k):
    return ((i + KEY_OFFSET) << 42) | ((j + KEY_OFFSET) << 21) | (k + KEY_OFFSET)


# -- ray casting against boxes and spheres --------------------------------


@njit
def _cast_rays_nb(origins, dirs, kinds, centers, rots, sizes):
    n = origins.shape[0]
    n_prim = kinds.shape[0]
    t_out = np.full(n, np.inf)
    idx_out = np.full(n, -1, dtype=np.int64)
    for r in range(n):
        best = np.inf
        best_i = -1
        for p in range(n_prim):
            ox = origins[r, 0] - centers[p, 0]
            oy = origins[r, 1] - centers[p, 1]
            oz = origins[r, 2] - centers[p, 2]
            dx = dirs[r, 0]
            dy = dirs[r, 1]
            dz = dirs[r, 2]
            if kinds[p] == SPHERE:
                a = dx * dx + dy * dy + dz * dz
                b = dx * ox + dy * oy + dz * oz
                c = ox * ox + oy * oy + oz * oz - sizes[p, 0] * sizes[p, 0]
                disc = b * b - a * c
                if disc < 0.0:
                    continue
                t = (-b - np.sqrt(disc)) / a
            else:
                tmin = -np.inf
                tmax = np.inf
                miss = False
                for ax in range(3):
                    lo = rots[p, 0, ax] * ox + rots[p, 1, ax] * oy + rots[p, 2, ax] * oz
                    ld = rots[p, 0, ax] * dx + rots[p, 1, ax] * dy + rots[p, 2, ax] * dz
                    h = sizes[p, ax]
                    if ld == 0.0:
                        if lo < -h or lo > h:
                            miss = True
                            break
                        continue
                    t1 = (-h - lo) / ld
                    t2 = (h - lo) / ld
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > tmin:
                        tmin = t1
                    if t2 < tmax:
                        tmax = t2
                if miss or tmax < tmin:
                    continue
                t = tmin
            if t > RAY_EPS and t < best:
                best = t
                best_i = p
        t_out[r] = best
        idx_out[r] = best_i
    return t_out, idx_out


def _cast_rays_np(origins, dirs, kinds, centers, rots, sizes):
    n = origins.shape[0]
    best = np.full(n, np.inf)
    best_i = np.full(n, -1, dtype=np.int64)
    for p in range(kinds.shape[0]):
        o = origins - centers[p]
        if kinds[p] == SPHERE:
            a = np.einsum("ij,ij->i", dirs, dirs)
            b = np.einsum("ij,ij->i", dirs, o)
            c = np.einsum("ij,ij->i", o, o) - sizes[p, 0] ** 2
            disc = b * b - a * c
            ok = disc >= 0.0
            t = np.full(n, np.inf)
            t[ok] = (-b[ok] - np.sqrt(disc[ok])) / a[ok]
        else:
            lo = o @ rots[p]
            ld = dirs @ rots[p]
            h = sizes[p]
            tmin = np.full(n, -np.inf)
            tmax = np.full(n, np.inf)
            miss = np.zeros(n, dtype=bool)
            for ax in range(3):
                zero = ld[:, ax] == 0.0
                miss |= zero & ((lo[:, ax] < -h[ax]) | (lo[:, ax] > h[ax]))
                with np.errstate(divide="ignore", invalid="ignore"):
                    t1 = (-h[ax] - lo[:, ax]) / ld[:, ax]
                    t2 = (h[ax] - lo[:, ax]) / ld[:, ax]
                lo_t = np.where(zero, -np.inf, np.minimum(t1, t2))
                hi_t = np.where(zero, np.inf, np.maximum(t1, t2))
                tmin = np.maximum(tmin, lo_t)
                tmax = np.minimum(tmax, hi_t)
            ok = ~miss & (tmax >= tmin)
            t = np.where(ok, tmin, np.inf)
        better = (t > RAY_EPS) & (t < best)
        best = np.where(better, t, best)
        best_i = np.where(better, p, best_i)
    return best, best_i


def cast_rays(origins, dirs, kinds, centers, rots, sizes):
    """Nearest hit of each ray against oriented boxes and spheres.

    ``rots[p]`` maps primitive-local axes to world, ``sizes[p]`` holds box
    half-extents or the sphere radius in column 0. Rays starting inside a
    primitive do not hit it. Returns ``(t, index)``; misses are ``(inf, -1)``.
    """
    args = (
        np.ascontiguousarray(origins, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        np.ascontiguousarray(kinds, dtype=np.int64),
        np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3),
        np.ascontiguousarray(rots, dtype=np.float64).reshape(-1, 3, 3),
        np.ascontiguousarray(sizes, dtype=np.float64).reshape(-1, 3),
    )
    if args[0].shape[0] == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    if _backend.USE_NUMBA:
        return _cast_rays_nb(*args)
    return _cast_rays_np(*args)


# -- voxel traversal (Amanatides & Woo) ------------------------------------


def _dda_setup(origins, ends, voxel):
    start = np.floor(origins / voxel).astype(np.int64)
    stop = np.floor(ends / voxel).astype(np.int64)
    d = ends - origins
    step = np.sign(d).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        boundary = (start + (step > 0)) * voxel
        t_max = np.where(d != 0, (boundary - origins) / d, np.inf)
        t_delta = np.where(d != 0, voxel / np.abs(d), np.inf)
    remaining = np.abs(stop - start)
    return start, stop, step, t_max, t_delta, remaining


@njit
def _traverse_nb(start, step, t_max, t_delta, remaining, offsets, out):
    for r in range(start.shape[0]):
        cx = start[r, 0]
        cy = start[r, 1]
        cz = start[r, 2]
        tx = t_max[r, 0]
        ty = t_max[r, 1]
        tz = t_max[r, 2]
        rx = remaining[r, 0]
        ry = remaining[r, 1]
        rz = remaining[r, 2]
        pos = offsets[r]
        total = rx + ry + rz
        for k in range(total):
            out[pos + k] = _pack1(cx, cy, cz)
            bx = tx if rx > 0 else np.inf
            by = ty if ry > 0 else np.inf
            bz = tz if rz > 0 else np.inf
            if bx <= by and bx <= bz:
                cx += step[r, 0]
                tx += t_delta[r, 0]
                rx -= 1
            elif by <= bz:
                cy += step[r, 1]
                ty += t_delta[r, 1]
                ry -= 1
            else:
                cz += step[r, 2]
                tz += t_delta[r, 2]
                rz -= 1
    return out


def _traverse_np(start, step, t_max, t_delta, remaining):
    n_steps = remaining.sum(axis=1)
    cur = start.copy()
    t_max = t_max.copy()
    rem = remaining.copy()
    chunks = []
    ray_ids = []
    for k in range(int(n_steps.max(initial=0))):
        act = np.nonzero(n_steps > k)[0]
        chunks.append(pack_keys(cur[act]))
        ray_ids.append(act)
        tm = np.where(rem[act] > 0, t_max[act], np.inf)
        ax = np.argmin(tm, axis=1)
        cur[act, ax] += step[act, ax]
        t_max[act, ax] += t_delta[act, ax]
        rem[act, ax] -= 1
    if not chunks:
        return np.zeros(0, dtype=np.int64)
    keys = np.concatenate(chunks)
    # reorder to ray-major so both backends agree element-wise
    order = np.argsort(np.concatenate(ray_ids), kind="stable")
    return keys[order]


def traverse_voxels(origins, ends, voxel):
    """Voxels crossed by each segment ``origin -> end``, excluding the end voxel.

    Returns ``(free_keys, end_keys)``: packed keys of traversed voxels in
    ray-major order, and the packed end voxel of every segment.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    ends = np.ascontiguousarray(ends, dtype=np.float64).reshape(-1, 3)
    start, stop, step, t_max, t_delta, remaining = _dda_setup(origins, ends, voxel)
    end_keys = pack_keys(stop)
    if _backend.USE_NUMBA:
        counts = remaining.sum(axis=1)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        out = np.empty(int(counts.sum()), dtype=np.int64)
        free = _traverse_nb(start, step, t_max, t_delta, remaining, offsets, out)
    else:
        free = _traverse_np(start, step, t_max, t_delta, remaining)
    return free, end_keys


# -- grid hash ------------------------------------------------------------


class GridHash:
    """Points bucketed into cubic cells, sorted by packed cell key."""

    def __init__(self, points, cell):
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell = float(cell)
        keys = pack_keys(cell_indices(self.points, self.cell))
        self.order = np.argsort(keys, kind="stable")
        self.cells, self.starts, self.counts = np.unique(
            keys[self.order], return_index=True, return_counts=True
        )


def _candidate_pairs_np(grid, query_cells):
    """(query index, reference index) for all points in the 27 neighbour cells."""
    qs, rs = [], []
    n_cells = grid.cells.shape[0]
    for off in _OFFSETS:
        nk = pack_keys(query_cells + off)
        pos = np.minimum(np.searchsorted(grid.cells, nk), n_cells - 1)
        q = np.nonzero(grid.cells[pos] == nk)[0]
        if q.size == 0:
            continue
        st = grid.starts[pos[q]]
        ct = grid.counts[pos[q]]
        within = np.arange(ct.sum()) - np.repeat(np.cumsum(ct) - ct, ct)
        qs.append(np.repeat(q, ct))
        rs.append(grid.order[np.repeat(st, ct) + within])
    if not qs:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(qs), np.concatenate(rs)


@njit
def _nearest_nb(query, ref, qcells, cells, starts, counts, order, max_d2):
    n = query.shape[0]
    idx = np.full(n, -1, dtype=np.int64)
    dist2 = np.full(n, np.inf)
    n_cells = cells.shape[0]
    for i in range(n):
        best = np.inf
        bj = -1
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    key = _pack1(qcells[i, 0] + dx, qcells[i, 1] + dy, qcells[i, 2] + dz)
                    c = np.searchsorted(cells, key)
                    if c >= n_cells or cells[c] != key:
                        continue
                    for m in range(starts[c], starts[c] + counts[c]):
                        j = order[m]
                        ex = query[i, 0] - ref[j, 0]
                        ey = query[i, 1] - ref[j, 1]
                        ez = query[i, 2] - ref[j, 2]
                        d2 = ex * ex + ey * ey + ez * ez
                        if d2 < best or (d2 == best and j < bj):
                            best = d2
                            bj = j
        if bj >= 0 and best <= max_d2:
            idx[i] = bj
            dist2[i] = best
    return idx, dist2


def _nearest_np(query, grid, qcells, max_d2):
    n = query.shape[0]
    idx = np.full(n, -1, dtype=np.int64)
    dist2 = np.full(n, np.inf)
    qi, rj = _candidate_pairs_np(grid, qcells)
    if qi.size == 0:
        return idx, dist2
    d2 = np.sum((query[qi] - grid.points[rj]) ** 2, axis=1)
    o = np.lexsort((rj, d2, qi))
    qi, rj, d2 = qi[o], rj[o], d2[o]
    first = np.ones(qi.size, dtype=bool)
    first[1:] = qi[1:] != qi[:-1]
    qi, rj, d2 = qi[first], rj[first], d2[first]
    ok = d2 <= max_d2
    idx[qi[ok]] = rj[ok]
    dist2[qi[ok]] = d2[ok]
    return idx, dist2


def nearest_neighbors(query, ref, max_dist, grid=None):
    """Exact nearest reference point within ``max_dist`` for each query point.

    Returns ``(index, distance)``; queries with no neighbour get ``(-1, inf)``.
    Equal distances resolve to the lower reference index.
    """
    query = np.ascontiguousarray(query, dtype=np.float64).reshape(-1, 3)
    if grid is None or grid.cell != float(max_dist):
        grid = GridHash(ref, max_dist)
    if query.shape[0] == 0 or grid.points.shape[0] == 0:
        return np.full(query.shape[0], -1, dtype=np.int64), np.full(query.shape[0], np.inf)
    qcells = cell_indices(query, grid.cell)
    max_d2 = float(max_dist) ** 2
    if _backend.USE_NUMBA:
        idx, d2 = _nearest_nb(
            query, grid.points, qcells, grid.cells, grid.starts, grid.counts, grid.order, max_d2
        )
    else:
        idx, d2 = _nearest_np(query, grid, qcells, max_d2)
    return idx, np.sqrt(d2)


# -- connected components -------------------------------------------------


@njit
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@njit
def _cluster_nb(points, pcells, cells, starts, counts, order, eps2):
    n = points.shape[0]
    parent = np.arange(n)
    n_cells = cells.shape[0]
    for i in range(n):
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    key = _pack1(pcells[i, 0] + dx, pcells[i, 1] + dy, pcells[i, 2] + dz)
                    c = np.searchsorted(cells, key)
                    if c >= n_cells or cells[c] != key:
                        continue
                    for m in range(starts[c], starts[c] + counts[c]):
                        j = order[m]
                        if j <= i:
                            continue
                        ex = points[i, 0] - points[j, 0]
                        ey = points[i, 1] - points[j, 1]
                        ez = points[i, 2] - points[j, 2]
                        if ex * ex + ey * ey + ez * ez <= eps2:
                            _union(parent, i, j)
    for i in range(n):
        parent[i] = _find(parent, i)
    return parent


def _propagate_min_labels(n, a, b):
    labels = np.arange(n)
    if a.size == 0:
        return labels
    while True:
        m = np.minimum(labels[a], labels[b])
        new = labels.copy()
        np.minimum.at(new, a, m)
        np.minimum.at(new, b, m)
        new = new[new]
        if np.array_equal(new, labels):
            return labels
        labels = new


def _cluster_np(grid, eps2):
    pts = grid.points
    qi, rj = _candidate_pairs_np(grid, cell_indices(pts, grid.cell))
    keep = rj > qi
    qi, rj = qi[keep], rj[keep]
    d2 = np.sum((pts[qi] - pts[rj]) ** 2, axis=1)
    ok = d2 <= eps2
    return _propagate_min_labels(pts.shape[0], qi[ok], rj[ok])


def _canonical_labels(roots, min_size):
    """Relabel components 0..k-1 by first member index; small ones become -1."""
    if roots.size == 0:
        return roots.astype(np.int64)
    uniq, first, inverse, counts = np.unique(
        roots, return_index=True, return_inverse=True, return_counts=True
    )
    rank = np.full(uniq.size, -1, dtype=np.int64)
    big = np.nonzero(counts >= min_size)[0]
    big = big[np.argsort(first[big], kind="stable")]
    rank[big] = np.arange(big.size)
    return rank[inverse]


def euclidean_clusters(points, eps, min_size=1):
    """Label points by single-linkage components with link distance ``<= eps``."""
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    grid = GridHash(points, eps)
    eps2 = float(eps) ** 2
    if _backend.USE_NUMBA:
        roots = _cluster_nb(
            grid.points,
            cell_indices(grid.points, grid.cell),
            grid.cells,
            grid.starts,
            grid.counts,
            grid.order,
            eps2,
        )
    else:
        roots = _cluster_np(grid, eps2)
    return _canonical_labels(roots, min_size)


@njit
def _depth_components_nb(depth, max_gap):
    h, w = depth.shape
    parent = np.arange(h * w)
    for v in range(h):
        for u in range(w):
            d = depth[v, u]
            if not np.isfinite(d):
                continue
            i = v * w + u
            if u + 1 < w and np.isfinite(depth[v, u + 1]) and abs(depth[v, u + 1] - d) <= max_gap:
                _union(parent, i, i + 1)
            if v + 1 < h and np.isfinite(depth[v + 1, u]) and abs(depth[v + 1, u] - d) <= max_gap:
                _union(parent, i, i + w)
    for i in range(h * w):
        parent[i] = _find(parent, i)
    return parent


def _depth_components_np(depth, max_gap):
    h, w = depth.shape
    idx = np.arange(h * w).reshape(h, w)
    fin = np.isfinite(depth)
    with np.errstate(invalid="ignore"):
        right = fin[:, :-1] & fin[:, 1:] & (np.abs(depth[:, 1:] - depth[:, :-1]) <= max_gap)
        down = fin[:-1, :] & fin[1:, :] & (np.abs(depth[1:, :] - depth[:-1, :]) <= max_gap)
    a = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    b = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    return _propagate_min_labels(h * w, a, b)


def depth_components(depth, max_gap, min_size=1):
    """4-connected components of finite depth pixels with gap ``<= max_gap``.

    Returns an ``(H, W)`` label image; invalid or small regions are -1.
    """
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    if _backend.USE_NUMBA:
        roots = _depth_components_nb(depth, float(max_gap))
    else:
        roots = _depth_components_np(depth, float(max_gap))
    roots = roots.copy()
    roots[~np.isfinite(depth).ravel()] = -1
    valid = roots >= 0
    labels = np.full(roots.shape, -1, dtype=np.int64)
    labels[valid] = _canonical_labels(roots[valid], min_size)
    return labels.reshape(depth.shape)
