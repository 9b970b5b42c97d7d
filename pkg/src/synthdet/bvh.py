"""Bounding volume hierarchy over triangle soup, with numba traversal.

The tree is built once per scene in numpy (median split on the longest
centroid axis) and flattened into arrays the jitted kernels walk with an
explicit stack.  Kernels are serial per ray, so results are independent
of worker count.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF_SIZE = 4
_STACK = 64


class BVH:
    def __init__(self, v0: np.ndarray, v1: np.ndarray, v2: np.ndarray):
        n = len(v0)
        self.v0 = np.ascontiguousarray(v0, dtype=np.float64)
        self.e1 = np.ascontiguousarray(v1 - v0, dtype=np.float64)
        self.e2 = np.ascontiguousarray(v2 - v0, dtype=np.float64)
        tri_min = np.minimum(np.minimum(v0, v1), v2)
        tri_max = np.maximum(np.maximum(v0, v1), v2)
        centroids = (tri_min + tri_max) / 2.0

        order = np.arange(n, dtype=np.int64)
        node_min, node_max, node_left, node_right, node_start, node_count = [], [], [], [], [], []

        def build(idx: np.ndarray) -> int:
            node = len(node_min)
            node_min.append(tri_min[idx].min(axis=0))
            node_max.append(tri_max[idx].max(axis=0))
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(-1)
            node_count.append(0)
            if len(idx) <= LEAF_SIZE:
                node_start[node] = len(leaf_order)
                node_count[node] = len(idx)
                leaf_order.extend(idx.tolist())
                return node
            c = centroids[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            split = np.argsort(c[:, axis], kind="stable")
            half = len(idx) // 2
            left = build(idx[split[:half]])
            right = build(idx[split[half:]])
            node_left[node] = left
            node_right[node] = right
            return node

        leaf_order: list[int] = []
        build(order)  # median split keeps depth ~ log2(n)

        self.node_min = np.ascontiguousarray(node_min, dtype=np.float64)
        self.node_max = np.ascontiguousarray(node_max, dtype=np.float64)
        self.node_left = np.ascontiguousarray(node_left, dtype=np.int64)
        self.node_right = np.ascontiguousarray(node_right, dtype=np.int64)
        self.node_start = np.ascontiguousarray(node_start, dtype=np.int64)
        self.node_count = np.ascontiguousarray(node_count, dtype=np.int64)
        self.order = np.ascontiguousarray(leaf_order, dtype=np.int64)

    def trace(self, origins: np.ndarray, dirs: np.ndarray):
        """Nearest hit per ray: (t, tri_index, bary_u, bary_v); miss -> t=inf, tri=-1."""
        o = np.ascontiguousarray(origins.reshape(-1, 3), dtype=np.float64)
        d = np.ascontiguousarray(dirs.reshape(-1, 3), dtype=np.float64)
        n = len(o)
        t = np.full(n, np.inf)
        tri = np.full(n, -1, dtype=np.int64)
        bu = np.zeros(n)
        bv = np.zeros(n)
        _trace_kernel(
            o, d, self.v0, self.e1, self.e2,
            self.node_min, self.node_max, self.node_left, self.node_right,
            self.node_start, self.node_count, self.order,
            t, tri, bu, bv,
        )
        return t, tri, bu, bv

    def occluded(self, origins: np.ndarray, dirs: np.ndarray, max_t: np.ndarray) -> np.ndarray:
        """True where any hit lies in (eps, max_t)."""
        o = np.ascontiguousarray(origins.reshape(-1, 3), dtype=np.float64)
        d = np.ascontiguousarray(dirs.reshape(-1, 3), dtype=np.float64)
        out = np.zeros(len(o), dtype=np.bool_)
        _occlusion_kernel(
            o, d, np.ascontiguousarray(max_t, dtype=np.float64),
            self.v0, self.e1, self.e2,
            self.node_min, self.node_max, self.node_left, self.node_right,
            self.node_start, self.node_count, self.order,
            out,
        )
        return out


@njit(cache=True, fastmath=False)
def _ray_box(ox, oy, oz, ix, iy, iz, bmin, bmax, tmax):
    t0 = (bmin[0] - ox) * ix
    t1 = (bmax[0] - ox) * ix
    if t0 > t1:
        t0, t1 = t1, t0
    tn = t0
    tf = t1
    t0 = (bmin[1] - oy) * iy
    t1 = (bmax[1] - oy) * iy
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > tn:
        tn = t0
    if t1 < tf:
        tf = t1
    t0 = (bmin[2] - oz) * iz
    t1 = (bmax[2] - oz) * iz
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > tn:
        tn = t0
    if t1 < tf:
        tf = t1
    return tf >= tn and tf >= 0.0 and tn <= tmax


@njit(cache=True, fastmath=False)
def _trace_kernel(o, d, v0, e1, e2, nmin, nmax, nleft, nright, nstart, ncount, order, t_out, tri_out, bu_out, bv_out):
    stack = np.empty(_STACK, dtype=np.int64)
    for r in range(o.shape[0]):
        ox, oy, oz = o[r, 0], o[r, 1], o[r, 2]
        dx, dy, dz = d[r, 0], d[r, 1], d[r, 2]
        ix = 1.0 / dx if dx != 0.0 else 1e30 if dx >= 0 else -1e30
        iy = 1.0 / dy if dy != 0.0 else 1e30 if dy >= 0 else -1e30
        iz = 1.0 / dz if dz != 0.0 else 1e30 if dz >= 0 else -1e30
        best_t = np.inf
        best_tri = -1
        best_u = 0.0
        best_v = 0.0
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _ray_box(ox, oy, oz, ix, iy, iz, nmin[node], nmax[node], best_t):
                continue
            if nleft[node] < 0:
                start = nstart[node]
                for k in range(ncount[node]):
                    tri = order[start + k]
                    # Moller-Trumbore
                    px = dy * e2[tri, 2] - dz * e2[tri, 1]
                    py = dz * e2[tri, 0] - dx * e2[tri, 2]
                    pz = dx * e2[tri, 1] - dy * e2[tri, 0]
                    det = e1[tri, 0] * px + e1[tri, 1] * py + e1[tri, 2] * pz
                    if -1e-12 < det < 1e-12:
                        continue
                    inv = 1.0 / det
                    sx = ox - v0[tri, 0]
                    sy = oy - v0[tri, 1]
                    sz = oz - v0[tri, 2]
                    u = (sx * px + sy * py + sz * pz) * inv
                    if u < -1e-9 or u > 1.0 + 1e-9:
                        continue
                    qx = sy * e1[tri, 2] - sz * e1[tri, 1]
                    qy = sz * e1[tri, 0] - sx * e1[tri, 2]
                    qz = sx * e1[tri, 1] - sy * e1[tri, 0]
                    v = (dx * qx + dy * qy + dz * qz) * inv
                    if v < -1e-9 or u + v > 1.0 + 1e-9:
                        continue
                    t = (e2[tri, 0] * qx + e2[tri, 1] * qy + e2[tri, 2] * qz) * inv
                    if 1e-9 < t < best_t:
                        best_t = t
                        best_tri = tri
                        best_u = u
                        best_v = v
            else:
                stack[sp] = nleft[node]
                sp += 1
                stack[sp] = nright[node]
                sp += 1
        t_out[r] = best_t
        tri_out[r] = best_tri
        bu_out[r] = best_u
        bv_out[r] = best_v


@njit(cache=True, fastmath=False)
def _occlusion_kernel(o, d, max_t, v0, e1, e2, nmin, nmax, nleft, nright, nstart, ncount, order, out):
    stack = np.empty(_STACK, dtype=np.int64)
    for r in range(o.shape[0]):
        ox, oy, oz = o[r, 0], o[r, 1], o[r, 2]
        dx, dy, dz = d[r, 0], d[r, 1], d[r, 2]
        limit = max_t[r]
        ix = 1.0 / dx if dx != 0.0 else 1e30 if dx >= 0 else -1e30
        iy = 1.0 / dy if dy != 0.0 else 1e30 if dy >= 0 else -1e30
        iz = 1.0 / dz if dz != 0.0 else 1e30 if dz >= 0 else -1e30
        hit = False
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0 and not hit:
            sp -= 1
            node = stack[sp]
            if not _ray_box(ox, oy, oz, ix, iy, iz, nmin[node], nmax[node], limit):
                continue
            if nleft[node] < 0:
                start = nstart[node]
                for k in range(ncount[node]):
                    tri = order[start + k]
                    px = dy * e2[tri, 2] - dz * e2[tri, 1]
                    py = dz * e2[tri, 0] - dx * e2[tri, 2]
                    pz = dx * e2[tri, 1] - dy * e2[tri, 0]
                    det = e1[tri, 0] * px + e1[tri, 1] * py + e1[tri, 2] * pz
                    if -1e-12 < det < 1e-12:
                        continue
                    inv = 1.0 / det
                    sx = ox - v0[tri, 0]
                    sy = oy - v0[tri, 1]
                    sz = oz - v0[tri, 2]
                    u = (sx * px + sy * py + sz * pz) * inv
                    if u < -1e-9 or u > 1.0 + 1e-9:
                        continue
                    qx = sy * e1[tri, 2] - sz * e1[tri, 1]
                    qy = sz * e1[tri, 0] - sx * e1[tri, 2]
                    qz = sx * e1[tri, 1] - sy * e1[tri, 0]
                    v = (dx * qx + dy * qy + dz * qz) * inv
                    if v < -1e-9 or u + v > 1.0 + 1e-9:
                        continue
                    t = (e2[tri, 0] * qx + e2[tri, 1] * qy + e2[tri, 2] * qz) * inv
                    if 1e-6 < t < limit:
                        hit = True
                        break
            else:
                stack[sp] = nleft[node]
                sp += 1
                stack[sp] = nright[node]
                sp += 1
        out[r] = hit
