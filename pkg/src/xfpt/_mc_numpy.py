"""Vectorized numpy replica of ``_mc_kernels``.

All live samples advance together one step at a time. Each sample keeps its
own counter, and draws happen in the same per-sample order as the scalar
kernel, so both backends consume identical random streams.
"""
from __future__ import annotations

import math

import numpy as np

from ._mc_kernels import FREE, HIT, INVALID, MAX_REDRAW, MAX_REFLECT

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LOW32 = np.uint64(0xFFFFFFFF)
_INV32 = 1.0 / 4294967296.0
_INV31 = 2.0 / 4294967296.0


def mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def sample_key(seed: np.uint64, index: np.ndarray) -> np.ndarray:
    index = np.asarray(index, dtype=np.uint64)
    return mix64(np.uint64(seed) ^ mix64(index * GOLDEN + GOLDEN))


def draw(key: np.ndarray, counter: np.ndarray) -> np.ndarray:
    return mix64(key + counter.astype(np.uint64) * GOLDEN)


def uniforms(bits: np.ndarray):
    hi = (bits >> np.uint64(32)).astype(np.float64)
    lo = (bits & _LOW32).astype(np.float64)
    return (hi + 0.5) * _INV32, (lo + 0.5) * _INV32


def normals(keys: np.ndarray, ctr: np.ndarray, idx: np.ndarray):
    """Polar-method normal pairs for samples ``idx``; advances ``ctr`` in place."""
    n1 = np.empty(idx.size)
    n2 = np.empty(idx.size)
    pend = np.arange(idx.size)
    while pend.size:
        gi = idx[pend]
        bits = draw(keys[gi], ctr[gi])
        ctr[gi] += np.uint64(1)
        u = (bits >> np.uint64(32)).astype(np.float64) * _INV31 - 1.0 + _INV32
        v = (bits & _LOW32).astype(np.float64) * _INV31 - 1.0 + _INV32
        s = u * u + v * v
        ok = s < 1.0
        f = np.sqrt(-2.0 * np.log(s[ok]) / s[ok])
        n1[pend[ok]] = u[ok] * f
        n2[pend[ok]] = v[ok] * f
        pend = pend[~ok]
    return n1, n2


def _entry_param(x0, y0, x1, y1, ix, iy, h):
    s_in = np.zeros_like(x0)
    with np.errstate(divide="ignore", invalid="ignore"):
        for p0, p1, i in ((x0, x1, ix), (y0, y1, iy)):
            d = p1 - p0
            lo = i * h
            hi = lo + h
            a = (lo - p0) / d
            b = (hi - p0) / d
            s_in = np.where(d != 0.0, np.maximum(s_in, np.minimum(a, b)), s_in)
    return np.minimum(np.maximum(s_in, 0.0), 1.0)


class _Grid:
    def __init__(self, nx, ny, h, blocked, target):
        self.nx, self.ny, self.h = nx, ny, h
        self.blocked = blocked
        self.target = target

    def cell(self, v):
        return np.floor(v / self.h).astype(np.int64)

    def inside(self, ix, iy):
        return (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)

    def flat(self, ix, iy, inside):
        return np.where(inside, iy * self.nx + ix, 0)

    def wall(self, ix, iy, tw):
        ins = self.inside(ix, iy)
        c = self.flat(ix, iy, ins)
        return ~ins | self.blocked[c] | (tw & self.target[c])


def run_batch(
    first, n, seed, start_pts, src_cells, nx, ny, h, sig, drift, blocked, target,
    nbmask, D, dt, max_time, partial, p_abs, bridge, rec_cap=0, stride=1,
):
    """Same contract as the numba ``run_batch``; optionally records paths.

    With ``rec_cap > 0`` also returns ``(rec, nrec)``: an (n, rec_cap, 3)
    array of (t, x, y) rows and the number of rows filled per sample.
    """
    g = _Grid(nx, ny, h, blocked, target)
    seed = np.uint64(seed)
    keys = sample_key(seed, np.arange(first, first + n, dtype=np.uint64))
    u1, u2 = uniforms(draw(keys, np.zeros(n, dtype=np.uint64)))
    u3, _ = uniforms(draw(keys, np.ones(n, dtype=np.uint64)))
    if start_pts.shape[0] > 0:
        j = np.minimum((u1 * start_pts.shape[0]).astype(np.int64), start_pts.shape[0] - 1)
        x = start_pts[j, 0].astype(float)
        y = start_pts[j, 1].astype(float)
    else:
        j = np.minimum((u1 * src_cells.shape[0]).astype(np.int64), src_cells.shape[0] - 1)
        c = src_cells[j]
        x = ((c % nx) + u2) * h
        y = ((c // nx) + u3) * h
    ctr = np.full(n, 2, dtype=np.uint64)
    sq = math.sqrt(2.0 * D * dt)
    t = np.zeros(n)
    step = np.zeros(n, dtype=np.int64)
    times = np.empty(n)
    cens = np.zeros(n, dtype=bool)
    hits = np.full((n, 2), np.nan)
    stats = np.zeros(4, dtype=np.int64)

    rec = np.empty((n, rec_cap, 3)) if rec_cap > 0 else None
    nrec = np.zeros(n, dtype=np.int64)
    if rec is not None:
        rec[:, 0, 0] = 0.0
        rec[:, 0, 1] = x
        rec[:, 0, 2] = y
        nrec[:] = 1

    def record(idx, tt, xx, yy):
        if rec is None or idx.size == 0:
            return
        room = nrec[idx] < rec_cap
        idx, tt, xx, yy = idx[room], tt[room], xx[room], yy[room]
        rows = nrec[idx]
        rec[idx, rows, 0] = tt
        rec[idx, rows, 1] = xx
        rec[idx, rows, 2] = yy
        nrec[idx] += 1

    def uniform_for(idx):
        u, _ = uniforms(draw(keys[idx], ctr[idx]))
        ctr[idx] += np.uint64(1)
        return u

    t_end = max_time * (1.0 + 1e-12)
    active = np.arange(n)
    while active.size:
        over = t[active] + dt > t_end
        if over.any():
            done = active[over]
            times[done] = max_time
            cens[done] = True
            active = active[~over]
            if not active.size:
                break
        a = active
        x0, y0 = x[a], y[a]
        ix0, iy0 = g.cell(x0), g.cell(y0)
        c0 = iy0 * nx + ix0
        s11, s12, s22 = sig[c0, 0], sig[c0, 1], sig[c0, 2]
        bx, by = drift[c0, 0], drift[c0, 1]
        m = a.size
        kind = np.full(m, INVALID, dtype=np.int64)
        px, py = x0.copy(), y0.copy()
        s_hit = np.zeros(m)

        pend = np.arange(m)
        for _attempt in range(MAX_REDRAW):
            if not pend.size:
                break
            gi = a[pend]
            n1, n2 = normals(keys, ctr, gi)
            qx = x0[pend] + bx[pend] * dt + sq * (s11[pend] * n1 + s12[pend] * n2)
            qy = y0[pend] + by[pend] * dt + sq * (s12[pend] * n1 + s22[pend] * n2)
            k = np.full(pend.size, INVALID, dtype=np.int64)
            sh = np.zeros(pend.size)
            tw = np.zeros(pend.size, dtype=bool)
            live = np.arange(pend.size)
            for it in range(MAX_REFLECT + 1):
                if not live.size:
                    break
                L = live
                ax0, ay0 = ix0[pend[L]], iy0[pend[L]]
                ix1, iy1 = g.cell(qx[L]), g.cell(qy[L])
                same = (ix1 == ax0) & (iy1 == ay0)
                ins = g.inside(ix1, iy1)
                cf = g.flat(ix1, iy1, ins)
                tg = ~same & ins & target[cf] & ~tw[L]
                hit_now = np.zeros(L.size, dtype=bool)
                if tg.any():
                    T = L[tg]
                    s = _entry_param(x0[pend[T]], y0[pend[T]], qx[T], qy[T], ix1[tg], iy1[tg], h)
                    if not partial:
                        hit_now[tg] = True
                        sh[T] = s
                    else:
                        stats[0] += T.size
                        u = uniform_for(a[pend[T]])
                        ab = u < p_abs
                        stats[1] += int(ab.sum())
                        sub = np.flatnonzero(tg)
                        hit_now[sub[ab]] = True
                        sh[T[ab]] = s[ab]
                        tw[T[~ab]] = True
                free = ~same & ~hit_now & ins & ~g.wall(ix1, iy1, tw[L])
                k[L[same | free]] = FREE
                k[L[hit_now]] = HIT
                rest = ~(same | free | hit_now)
                if it == MAX_REFLECT:
                    break
                R = L[rest]
                if not R.size:
                    live = R
                    break
                rx0, ry0 = ax0[rest], ay0[rest]
                rx1, ry1 = ix1[rest], iy1[rest]
                twr = tw[R]
                rx = (rx1 != rx0) & g.wall(rx1, ry0, twr)
                ry = (ry1 != ry0) & g.wall(rx0, ry1, twr)
                neither = ~rx & ~ry
                rx = np.where(neither, rx1 != rx0, rx)
                ry = np.where(neither, ry1 != ry0, ry)
                fx = np.where(rx1 > rx0, (rx0 + 1) * h, rx0 * h)
                fy = np.where(ry1 > ry0, (ry0 + 1) * h, ry0 * h)
                qx[R] = np.where(rx, 2.0 * fx - qx[R], qx[R])
                qy[R] = np.where(ry, 2.0 * fy - qy[R], qy[R])
                live = R
            px[pend] = qx
            py[pend] = qy
            kind[pend] = k
            s_hit[pend] = sh
            bad = k == INVALID
            stats[2] += int(bad.sum())
            pend = pend[bad]
        stuck = kind == INVALID
        px[stuck] = x0[stuck]
        py[stuck] = y0[stuck]
        kind[stuck] = FREE

        finished = np.zeros(m, dtype=bool)
        hm = kind == HIT
        if hm.any():
            H = np.flatnonzero(hm)
            gi = a[H]
            hx = x0[H] + s_hit[H] * (px[H] - x0[H])
            hy = y0[H] + s_hit[H] * (py[H] - y0[H])
            th = t[gi] + s_hit[H] * dt
            times[gi] = th
            hits[gi, 0] = hx
            hits[gi, 1] = hy
            record(gi, th, hx, hy)
            finished[H] = True

        if bridge:
            still = ~finished
            ix1, iy1 = g.cell(px), g.cell(py)
            moved = (ix1 != ix0) | (iy1 != iy0)
            a11 = s11 * s11 + s12 * s12
            a22 = s12 * s12 + s22 * s22
            for which in range(2):
                cx = ix1 if which == 0 else ix0
                cy = iy1 if which == 0 else iy0
                for f in range(4):
                    if f == 0:
                        plane = cx * h
                        d0, d1, ann = x0 - plane, px - plane, a11
                    elif f == 1:
                        plane = (cx + 1) * h
                        d0, d1, ann = plane - x0, plane - px, a11
                    elif f == 2:
                        plane = cy * h
                        d0, d1, ann = y0 - plane, py - plane, a22
                    else:
                        plane = (cy + 1) * h
                        d0, d1, ann = plane - y0, plane - py, a22
                    has = ((nbmask[cy * nx + cx] >> f) & 1).astype(bool)
                    ok = still & has & (d0 > 0.0) & (d1 > 0.0)
                    if which == 1:
                        ok &= moved
                    if not ok.any():
                        continue
                    B = np.flatnonzero(ok)
                    p_cross = np.exp(-d0[B] * d1[B] / (D * ann[B] * dt))
                    u = uniform_for(a[B])
                    crossed = u < p_cross
                    if not crossed.any():
                        continue
                    C = B[crossed]
                    stats[3] += C.size
                    s = d0[C] / (d0[C] + d1[C])
                    hx = x0[C] + s * (px[C] - x0[C])
                    hy = y0[C] + s * (py[C] - y0[C])
                    if f < 2:
                        hx = plane[C]
                    else:
                        hy = plane[C]
                    gi = a[C]
                    th = t[gi] + s * dt
                    times[gi] = th
                    hits[gi, 0] = hx
                    hits[gi, 1] = hy
                    record(gi, th, hx, hy)
                    still[C] = False
                    finished[C] = True

        mv = ~finished
        gi = a[mv]
        x[gi] = px[mv]
        y[gi] = py[mv]
        t[gi] += dt
        step[gi] += 1
        if rec is not None:
            sel = gi[step[gi] % stride == 0]
            record(sel, t[sel], x[sel], y[sel])
        active = gi
    if rec_cap > 0:
        return times, cens, hits, stats, rec, nrec
    return times, cens, hits, stats
