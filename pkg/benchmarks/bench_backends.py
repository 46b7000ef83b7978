"""Compare the numba kernels with their pure-numpy/scipy fallbacks.

    python3 benchmarks/bench_backends.py [--samples 4000] [--repeat 3] [--json out.json]

Each kernel runs once to warm the JIT cache and then ``--repeat`` times; the
best wall time is reported. Results are also checked for agreement, since
the fallbacks are meant to reproduce the compiled path exactly.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import time

os.environ.setdefault("XFPT_THREADS", "1")

import numpy as np  # noqa: E402

from xfpt import DynamicsSpec, MetricField, RegionSpec, geodesic_distance, simulate_fpt  # noqa: E402
from xfpt._backend import NUMBA_AVAILABLE  # noqa: E402
from xfpt.grid import field_from_dict, two_band_config  # noqa: E402


def best_of(fn, repeat: int):
    fn()
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def strip_case():
    h = 0.05
    nx = int(round(4.0 / h)) + 1
    fld = MetricField.uniform(nx, 1, h)
    tgt = np.zeros((1, nx), bool)
    tgt[0, -1] = True
    src = np.zeros((1, nx), bool)
    src[0, int(3.0 / h)] = True
    return fld, RegionSpec(src, tgt, np.array([[3.0, h / 2]]))


def bench_mc(samples: int, repeat: int) -> list[dict]:
    rows = []
    cases = {"strip": strip_case(), "two-band": (lambda c: (c.field, c.regions))(field_from_dict(two_band_config()))}
    dyn = DynamicsSpec(dt=1e-4, max_time=0.2, seed=1)
    for name, (fld, reg) in cases.items():
        res = {}
        for backend in ("numba", "numpy"):
            wall, s = best_of(lambda b=backend: simulate_fpt(fld, reg, dyn, math.inf, samples, backend=b), repeat)
            steps = float(np.sum(np.ceil(s.times / dyn.dt)))
            res[backend] = (wall, s)
            rows.append({"kernel": f"monte-carlo/{name}", "backend": backend, "seconds": wall, "Msteps_per_s": steps / wall / 1e6})
        a, b = res["numba"][1], res["numpy"][1]
        rows[-1]["max_abs_diff"] = float(np.max(np.abs(a.times - b.times)))
    return rows


def bench_dijkstra(n: int, repeat: int) -> list[dict]:
    rng = np.random.default_rng(0)
    lam = rng.uniform(0.1, 1.0, (n, n))
    fld = MetricField.uniform(n, n, 1.0 / n).with_tensors(np.stack([lam, 0.2 * lam, lam], axis=-1))
    reg = RegionSpec.from_primitives(
        fld, [{"type": "disk", "center": [0.1, 0.1], "radius": 0.03}], [{"type": "disk", "center": [0.9, 0.85], "radius": 0.03}]
    )
    rows, lengths = [], {}
    for backend in ("numba", "scipy"):
        wall, g = best_of(lambda b=backend: geodesic_distance(fld, reg, backend=b), repeat)
        lengths[backend] = g.length
        rows.append({"kernel": f"dijkstra/{n}x{n}", "backend": backend, "seconds": wall})
    rows[-1]["max_abs_diff"] = abs(lengths["numba"] - lengths["scipy"])
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--grid", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    rows = bench_mc(args.samples, args.repeat) + bench_dijkstra(args.grid, args.repeat)
    base = {}
    print(f"{'kernel':24s} {'backend':8s} {'seconds':>9s} {'vs numba':>8s}  notes")
    for r in rows:
        base.setdefault(r["kernel"], r["seconds"])
        speed = r["seconds"] / base[r["kernel"]]
        notes = []
        if "Msteps_per_s" in r:
            notes.append(f"{r['Msteps_per_s']:.2f} Msteps/s")
        if "max_abs_diff" in r:
            notes.append(f"max |diff| vs numba {r['max_abs_diff']:.1e}")
        print(f"{r['kernel']:24s} {r['backend']:8s} {r['seconds']:9.3f} {1 / speed:7.2f}x  {', '.join(notes)}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
