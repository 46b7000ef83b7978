"""Scalar Euler-Maruyama kernel (numba) for first passage on a tensor grid.

One sample runs start-to-finish in ``run_sample``; ``run_batch`` loops samples.
Random numbers come from a counter-based generator keyed by (seed, sample
index), so every sample's stream is independent of scheduling and the numpy
backend in ``_mc_numpy`` can reproduce it draw for draw.

Draw order per sample: two draws for the start position, then per step the
polar-method draws for each proposed increment (two normals, one or more
draws), one uniform per target
contact when the target is partially absorbing, and one uniform per face
tested by the Brownian-bridge crossing check.
"""
from __future__ import annotations

import math

import numpy as np

from ._backend import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_LOW32 = np.uint64(0xFFFFFFFF)
_INV32 = 1.0 / 4294967296.0
_INV31 = 2.0 / 4294967296.0

MAX_REFLECT = 8
MAX_REDRAW = 64

FREE = 0
HIT = 1
INVALID = 2


@njit
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def sample_key(seed, index):
    return mix64(seed ^ mix64(np.uint64(index) * GOLDEN + GOLDEN))


@njit
def draw(key, counter):
    """64 random bits for (key, counter): SplitMix64 with the key as stream offset."""
    return mix64(key + np.uint64(counter) * GOLDEN)


@njit
def uniforms(bits):
    """Two uniforms in (0, 1) from the two 32-bit halves."""
    hi = float(bits >> _S32)
    lo = float(bits & _LOW32)
    return (hi + 0.5) * _INV32, (lo + 0.5) * _INV32


@njit
def normals(key, counter):
    """Two independent normals by Marsaglia's polar method.

    Each attempt consumes one draw; returns (n1, n2, next_counter).
    """
    while True:
        bits = draw(key, counter)
        counter += 1
        u = float(bits >> _S32) * _INV31 - 1.0 + _INV32
        v = float(bits & _LOW32) * _INV31 - 1.0 + _INV32
        s = u * u + v * v
        if s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            return u * f, v * f, counter


@njit
def _cell(v, h, n):
    return int(math.floor(v / h))


def neighbour_mask(target: np.ndarray) -> np.ndarray:
    """Per-cell bitmask of target neighbours in order (-x, +x, -y, +y)."""
    tg = np.asarray(target, dtype=bool)
    ny, nx = tg.shape
    pad = np.zeros((ny + 2, nx + 2), dtype=bool)
    pad[1:-1, 1:-1] = tg
    mask = np.zeros((ny, nx), dtype=np.int64)
    mask |= pad[1:-1, :-2].astype(np.int64) << 0
    mask |= pad[1:-1, 2:].astype(np.int64) << 1
    mask |= pad[:-2, 1:-1].astype(np.int64) << 2
    mask |= pad[2:, 1:-1].astype(np.int64) << 3
    return mask.ravel()


@njit
def _wall(ix, iy, nx, ny, blocked, target, target_wall):
    if ix < 0 or ix >= nx or iy < 0 or iy >= ny:
        return True
    c = iy * nx + ix
    if blocked[c]:
        return True
    return target_wall and target[c]


@njit
def _entry_param(x0, y0, x1, y1, ix, iy, h):
    """Parameter in [0, 1] where segment p0->p1 enters cell (ix, iy)."""
    s_in = 0.0
    dx = x1 - x0
    dy = y1 - y0
    lo = ix * h
    hi = lo + h
    if dx != 0.0:
        a = (lo - x0) / dx
        b = (hi - x0) / dx
        s_in = max(s_in, min(a, b))
    lo = iy * h
    hi = lo + h
    if dy != 0.0:
        a = (lo - y0) / dy
        b = (hi - y0) / dy
        s_in = max(s_in, min(a, b))
    return min(max(s_in, 0.0), 1.0)


@njit
def run_sample(
    index, seed, start_pts, src_cells, nx, ny, h, sig, drift, blocked, target,
    nbmask, D, dt, max_time, partial, p_abs, bridge, rec, stride, stats,
):
    """Simulate one searcher. Returns (time, censored, hit_x, hit_y, n_recorded).

    ``nbmask[c]`` has bit f set when the f-th neighbour (-x, +x, -y, +y) of
    cell c is a target cell; the bridge check only looks at those faces.
    ``stats`` accumulates [contacts, absorptions, redraws, bridge_hits].
    ``rec`` is an (m, 3) buffer of (t, x, y) rows, filled every ``stride``
    steps until full (pass a 0-row array to disable recording).
    """
    key = sample_key(seed, index)
    u1, u2 = uniforms(draw(key, 0))
    u3, u4 = uniforms(draw(key, 1))
    if start_pts.shape[0] > 0:
        j = min(int(u1 * start_pts.shape[0]), start_pts.shape[0] - 1)
        x = start_pts[j, 0]
        y = start_pts[j, 1]
    else:
        j = min(int(u1 * src_cells.shape[0]), src_cells.shape[0] - 1)
        c = src_cells[j]
        x = ((c % nx) + u2) * h
        y = ((c // nx) + u3) * h
    ctr = 2
    sq = math.sqrt(2.0 * D * dt)
    t = 0.0
    nrec = 0
    step = 0
    if rec.shape[0] > 0:
        rec[0, 0] = 0.0
        rec[0, 1] = x
        rec[0, 2] = y
        nrec = 1
    t_end = max_time * (1.0 + 1e-12)
    ix0 = _cell(x, h, nx)
    iy0 = _cell(y, h, ny)
    c0 = iy0 * nx + ix0
    s11 = sig[c0, 0]
    s12 = sig[c0, 1]
    s22 = sig[c0, 2]
    bx = drift[c0, 0]
    by = drift[c0, 1]
    while True:
        if t + dt > t_end:
            return max_time, True, math.nan, math.nan, nrec
        ex = ix0
        ey = iy0
        kind = INVALID
        px = x
        py = y
        s_hit = 0.0
        for attempt in range(MAX_REDRAW):
            n1, n2, ctr = normals(key, ctr)
            px = x + bx * dt + sq * (s11 * n1 + s12 * n2)
            py = y + by * dt + sq * (s12 * n1 + s22 * n2)
            target_wall = False
            kind = INVALID
            for it in range(MAX_REFLECT + 1):
                ix1 = _cell(px, h, nx)
                iy1 = _cell(py, h, ny)
                if ix1 == ix0 and iy1 == iy0:
                    kind = FREE
                    ex = ix1
                    ey = iy1
                    break
                inside = 0 <= ix1 < nx and 0 <= iy1 < ny
                if inside and target[iy1 * nx + ix1] and not target_wall:
                    s = _entry_param(x, y, px, py, ix1, iy1, h)
                    if not partial:
                        kind = HIT
                        s_hit = s
                        break
                    stats[0] += 1
                    u, _ = uniforms(draw(key, ctr))
                    ctr += 1
                    if u < p_abs:
                        stats[1] += 1
                        kind = HIT
                        s_hit = s
                        break
                    target_wall = True
                if inside and not _wall(ix1, iy1, nx, ny, blocked, target, target_wall):
                    kind = FREE
                    ex = ix1
                    ey = iy1
                    break
                if it == MAX_REFLECT:
                    break
                rx = ix1 != ix0 and _wall(ix1, iy0, nx, ny, blocked, target, target_wall)
                ry = iy1 != iy0 and _wall(ix0, iy1, nx, ny, blocked, target, target_wall)
                if not rx and not ry:
                    rx = ix1 != ix0
                    ry = iy1 != iy0
                if rx:
                    fx = (ix0 + 1) * h if ix1 > ix0 else ix0 * h
                    px = 2.0 * fx - px
                if ry:
                    fy = (iy0 + 1) * h if iy1 > iy0 else iy0 * h
                    py = 2.0 * fy - py
            if kind != INVALID:
                break
            stats[2] += 1
        if kind == INVALID:
            px = x
            py = y
            ex = ix0
            ey = iy0
            kind = FREE
        if kind == HIT:
            hx = x + s_hit * (px - x)
            hy = y + s_hit * (py - y)
            t_hit = t + s_hit * dt
            if rec.shape[0] > 0 and nrec < rec.shape[0]:
                rec[nrec, 0] = t_hit
                rec[nrec, 1] = hx
                rec[nrec, 2] = hy
                nrec += 1
            return t_hit, False, hx, hy, nrec
        if bridge:
            ix1 = ex
            iy1 = ey
            a11 = s11 * s11 + s12 * s12
            a22 = s12 * s12 + s22 * s22
            for which in range(2):
                if which == 0:
                    cx = ix1
                    cy = iy1
                else:
                    if ix1 == ix0 and iy1 == iy0:
                        break
                    cx = ix0
                    cy = iy0
                bits = nbmask[cy * nx + cx]
                if bits == 0:
                    continue
                for f in range(4):
                    if not (bits >> f) & 1:
                        continue
                    if f == 0:
                        plane = cx * h
                        d0 = x - plane
                        d1 = px - plane
                        ann = a11
                    elif f == 1:
                        plane = (cx + 1) * h
                        d0 = plane - x
                        d1 = plane - px
                        ann = a11
                    elif f == 2:
                        plane = cy * h
                        d0 = y - plane
                        d1 = py - plane
                        ann = a22
                    else:
                        plane = (cy + 1) * h
                        d0 = plane - y
                        d1 = plane - py
                        ann = a22
                    if d0 <= 0.0 or d1 <= 0.0:
                        continue
                    p_cross = math.exp(-d0 * d1 / (D * ann * dt))
                    u, _ = uniforms(draw(key, ctr))
                    ctr += 1
                    if u < p_cross:
                        stats[3] += 1
                        s = d0 / (d0 + d1)
                        hx = x + s * (px - x)
                        hy = y + s * (py - y)
                        if f < 2:
                            hx = plane
                        else:
                            hy = plane
                        t_hit = t + s * dt
                        if rec.shape[0] > 0 and nrec < rec.shape[0]:
                            rec[nrec, 0] = t_hit
                            rec[nrec, 1] = hx
                            rec[nrec, 2] = hy
                            nrec += 1
                        return t_hit, False, hx, hy, nrec
        x = px
        y = py
        t += dt
        if ex != ix0 or ey != iy0:
            ix0 = ex
            iy0 = ey
            c0 = iy0 * nx + ix0
            s11 = sig[c0, 0]
            s12 = sig[c0, 1]
            s22 = sig[c0, 2]
            bx = drift[c0, 0]
            by = drift[c0, 1]
        step += 1
        if rec.shape[0] > 0 and step % stride == 0 and nrec < rec.shape[0]:
            rec[nrec, 0] = t
            rec[nrec, 1] = x
            rec[nrec, 2] = y
            nrec += 1


@njit
def run_batch(
    first, n, seed, start_pts, src_cells, nx, ny, h, sig, drift, blocked, target,
    nbmask, D, dt, max_time, partial, p_abs, bridge,
):
    times = np.empty(n)
    cens = np.zeros(n, dtype=np.bool_)
    hits = np.empty((n, 2))
    stats = np.zeros(4, dtype=np.int64)
    rec = np.empty((0, 3))
    for i in range(n):
        t, c, hx, hy, _ = run_sample(
            first + i, seed, start_pts, src_cells, nx, ny, h, sig, drift, blocked, target,
            nbmask, D, dt, max_time, partial, p_abs, bridge, rec, 1, stats,
        )
        times[i] = t
        cens[i] = c
        hits[i, 0] = hx
        hits[i, 1] = hy
    return times, cens, hits, stats
