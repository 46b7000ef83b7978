"""Riemannian length under the metric a^{-1}(x) on obstacle-laden grids.

The continuous infimum over paths is replaced by a multi-source Dijkstra
search over cell centres with a 16-neighbour stencil. The edge from cell p to
cell p + e costs ``sqrt(e^T abar^{-1} e)``, where ``abar`` is the mean of the
two endpoint tensors. An edge is blocked when an endpoint or any cell the
segment passes through is an obstacle. A diagonal move also needs both
orthogonal neighbours free, so paths cannot slip through obstacle corners.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._backend import USE_NUMBA, njit
from .asymptotics import AsymptoticSpec
from .errors import ObstacleCrossing, Unreachable
from .grid import MetricField, RegionSpec

STENCILS = {
    4: [(1, 0), (0, 1), (-1, 0), (0, -1)],
    8: [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)],
}
STENCILS[16] = STENCILS[8] + [(1, 2), (2, 1), (-1, 2), (-2, 1), (-1, -2), (-2, -1), (1, -2), (2, -1)]


@lru_cache(maxsize=None)
def _traversed(dx: int, dy: int) -> tuple[tuple[int, int], ...]:
    """Cells strictly between (0, 0) and (dx, dy) that the segment visits."""
    cells = set()
    n = 64 * (abs(dx) + abs(dy))
    for i in range(n):
        s = (i + 0.5) / n
        cx, cy = math.floor(s * dx + 0.5), math.floor(s * dy + 0.5)
        cells.add((cx, cy))
    if abs(dx) == abs(dy):
        cells.update({(dx, 0), (0, dy)})
    cells.discard((0, 0))
    cells.discard((dx, dy))
    return tuple(sorted(cells))


def _stencil_arrays(order: int):
    offs = np.array(STENCILS[order], dtype=np.int64)
    trav = [_traversed(int(dx), int(dy)) for dx, dy in offs]
    width = max(1, max(len(t) for t in trav))
    inter = np.zeros((len(offs), width, 2), dtype=np.int64)
    count = np.zeros(len(offs), dtype=np.int64)
    for i, cells in enumerate(trav):
        count[i] = len(cells)
        for j, c in enumerate(cells):
            inter[i, j] = c
    return offs, inter, count


@njit
def _edge_cost(tens, c0, c1, dx, dy, h):
    a = 0.5 * (tens[c0, 0] + tens[c1, 0])
    b = 0.5 * (tens[c0, 1] + tens[c1, 1])
    c = 0.5 * (tens[c0, 2] + tens[c1, 2])
    det = a * c - b * b
    ex = dx * h
    ey = dy * h
    return math.sqrt((c * ex * ex - 2.0 * b * ex * ey + a * ey * ey) / det)


@njit
def _edge_open(blocked, nx, ny, ix, iy, k, offs, inter, count):
    jx = ix + offs[k, 0]
    jy = iy + offs[k, 1]
    if jx < 0 or jx >= nx or jy < 0 or jy >= ny:
        return False
    if blocked[jy * nx + jx]:
        return False
    for q in range(count[k]):
        qx = ix + inter[k, q, 0]
        qy = iy + inter[k, q, 1]
        if qx < 0 or qx >= nx or qy < 0 or qy >= ny or blocked[qy * nx + qx]:
            return False
    return True


@njit
def _heap_push(hk, hv, size, key, val):
    i = size
    hk[i] = key
    hv[i] = val
    while i > 0:
        p = (i - 1) >> 1
        if hk[p] <= hk[i]:
            break
        hk[p], hk[i] = hk[i], hk[p]
        hv[p], hv[i] = hv[i], hv[p]
        i = p
    return size + 1


@njit
def _heap_pop(hk, hv, size):
    key = hk[0]
    val = hv[0]
    size -= 1
    hk[0] = hk[size]
    hv[0] = hv[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and hk[left + 1] < hk[left]:
            child = left + 1
        if hk[i] <= hk[child]:
            break
        hk[child], hk[i] = hk[i], hk[child]
        hv[child], hv[i] = hv[i], hv[child]
        i = child
    return key, val, size


@njit
def _dijkstra_numba(nx, ny, h, tens, blocked, targets, sources, offs, inter, count):
    n = nx * ny
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    cap = n * offs.shape[0] + sources.shape[0] + 1
    hk = np.empty(cap)
    hv = np.empty(cap, dtype=np.int64)
    size = 0
    for s in sources:
        dist[s] = 0.0
        size = _heap_push(hk, hv, size, 0.0, s)
    hit = -1
    while size > 0:
        d, u, size = _heap_pop(hk, hv, size)
        if done[u] or d > dist[u]:
            continue
        done[u] = True
        if targets[u]:
            hit = u
            break
        ix = u % nx
        iy = u // nx
        for k in range(offs.shape[0]):
            if not _edge_open(blocked, nx, ny, ix, iy, k, offs, inter, count):
                continue
            v = (iy + offs[k, 1]) * nx + ix + offs[k, 0]
            nd = d + _edge_cost(tens, u, v, offs[k, 0], offs[k, 1], h)
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                size = _heap_push(hk, hv, size, nd, v)
    return dist, pred, hit


def _edge_list(fld: MetricField, offs, inter, count):
    """All open directed edges (u, v, cost) of the stencil graph, vectorized."""
    nx, ny = fld.nx, fld.ny
    blocked = fld.obstacles
    tens = fld.tensors.reshape(-1, 3)
    iy, ix = np.mgrid[0:ny, 0:nx]
    ix, iy = ix.ravel(), iy.ravel()
    free = ~blocked.ravel()
    us, vs, ws = [], [], []
    for k, (dx, dy) in enumerate(offs):
        jx, jy = ix + dx, iy + dy
        ok = free & (jx >= 0) & (jx < nx) & (jy >= 0) & (jy < ny)
        jxc, jyc = np.clip(jx, 0, nx - 1), np.clip(jy, 0, ny - 1)
        ok &= ~blocked[jyc, jxc]
        for q in range(count[k]):
            qx, qy = ix + inter[k, q, 0], iy + inter[k, q, 1]
            inside = (qx >= 0) & (qx < nx) & (qy >= 0) & (qy < ny)
            ok &= inside & ~blocked[np.clip(qy, 0, ny - 1), np.clip(qx, 0, nx - 1)]
        u = (iy * nx + ix)[ok]
        v = (jy * nx + jx)[ok]
        a = 0.5 * (tens[u, 0] + tens[v, 0])
        b = 0.5 * (tens[u, 1] + tens[v, 1])
        c = 0.5 * (tens[u, 2] + tens[v, 2])
        ex, ey = dx * fld.h, dy * fld.h
        w = np.sqrt((c * ex * ex - 2.0 * b * ex * ey + a * ey * ey) / (a * c - b * b))
        us.append(u)
        vs.append(v)
        ws.append(w)
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ws)


def _dijkstra_scipy(fld: MetricField, targets, sources, offs, inter, count):
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import dijkstra

    n = fld.nx * fld.ny
    u, v, w = _edge_list(fld, offs, inter, count)
    # explicit zeros would vanish from the sparse graph; costs are always > 0 here
    graph = csr_matrix((w, (u, v)), shape=(n, n))
    dist, pred, _ = dijkstra(graph, directed=True, indices=sources, min_only=True, return_predecessors=True)
    pred = np.where(pred < 0, -1, pred).astype(np.int64)
    cand = np.where(targets, dist, np.inf)
    hit = int(np.argmin(cand)) if np.isfinite(cand.min()) else -1
    return dist, pred, hit


@dataclass
class GeodesicResult:
    length: float
    path: np.ndarray  # (n, 2) physical points, source end first
    reachable: bool
    meta: dict = field(default_factory=dict)


def geodesic_distance(fld: MetricField, regions: RegionSpec, stencil: int = 16, backend: str | None = None) -> GeodesicResult:
    """Shortest metric distance from any source cell to any target cell.

    Returns ``length = inf`` with ``reachable = False`` when obstacles
    disconnect the two sets.
    """
    regions.validate(fld)
    offs, inter, count = _stencil_arrays(stencil)
    sources = np.flatnonzero(regions.sources.ravel()).astype(np.int64)
    targets = regions.targets.ravel()
    backend = backend or ("numba" if USE_NUMBA else "scipy")
    if backend == "numba":
        dist, pred, hit = _dijkstra_numba(
            fld.nx, fld.ny, fld.h, fld.tensors.reshape(-1, 3), fld.obstacles.ravel(),
            targets, sources, offs, inter, count,
        )
    else:
        dist, pred, hit = _dijkstra_scipy(fld, targets, sources, offs, inter, count)
    meta = {"stencil": stencil, "backend": backend, "relaxation": "dijkstra-binary-heap"}
    if hit < 0:
        return GeodesicResult(math.inf, np.empty((0, 2)), False, meta)
    chain = [hit]
    while pred[chain[-1]] >= 0:
        chain.append(int(pred[chain[-1]]))
    chain.reverse()
    idx = np.asarray(chain)
    pts = np.column_stack([(idx % fld.nx + 0.5) * fld.h, (idx // fld.nx + 0.5) * fld.h])
    return GeodesicResult(float(dist[hit]), pts, True, meta)


def _segment_cells(fld: MetricField, p0, p1):
    """Cells visited by the open segment p0 -> p1 (dense sampling)."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    n = max(2, int(math.ceil(np.hypot(*(p1 - p0)) / (0.05 * fld.h))) + 1)
    s = (np.arange(n) + 0.5) / n
    pts = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
    return fld.cell_of(pts[:, 0], pts[:, 1])


def path_length(fld: MetricField, polyline) -> float:
    """Sum over segments of sqrt(dx^T a^{-1} dx), a averaged over the segment's end cells.

    Segments longer than 2.5 h are split so the tensor sampling stays local;
    grid edges are never split, so Dijkstra paths reproduce their cost.
    """
    pts = np.asarray(polyline, dtype=float).reshape(-1, 2)
    tens = fld.tensors
    total = []
    for p0, p1 in zip(pts[:-1], pts[1:]):
        ix, iy = _segment_cells(fld, p0, p1)
        ex, ey = fld.cell_of(np.array([p0[0], p1[0]]), np.array([p0[1], p1[1]]))
        if np.any(ix < 0) or np.any(ex < 0):
            raise ObstacleCrossing("segment leaves the grid")
        if np.any(fld.obstacles[iy, ix]) or np.any(fld.obstacles[ey, ex]):
            raise ObstacleCrossing("segment crosses an obstacle cell")
        seg = p1 - p0
        pieces = max(1, int(math.ceil(np.hypot(*seg) / (2.5 * fld.h) - 1e-9)))
        for i in range(pieces):
            q0 = p0 + seg * (i / pieces)
            q1 = p0 + seg * ((i + 1) / pieces)
            cx, cy = fld.cell_of(np.array([q0[0], q1[0]]), np.array([q0[1], q1[1]]))
            a, b, c = 0.5 * (tens[cy[0], cx[0]] + tens[cy[1], cx[1]])
            dx, dy = q1 - q0
            total.append(math.sqrt((c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / (a * c - b * b)))
    return math.fsum(total)


def effective_length_for_asymptotics(fld: MetricField, regions: RegionSpec, stencil: int = 16) -> AsymptoticSpec:
    """Geodesic length packaged with the field's D; raises Unreachable instead of returning inf."""
    res = geodesic_distance(fld, regions, stencil)
    if not res.reachable:
        raise Unreachable("obstacles disconnect the source set from the target set")
    return AsymptoticSpec(res.length, fld.D)

