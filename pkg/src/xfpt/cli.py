"""Command-line front end.

Subcommands write CSV/JSON/SVG artifacts plus a manifest into ``--out``. Exit
codes: 0 success, 2 configuration error, 3 numerical failure; failures also
leave ``error.json`` in the output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import svg
from .asymptotics import AsymptoticSpec, extreme_moment_asymptotic
from .errors import ConfigError, NumericalError, Unreachable, XfptError
from .geodesic import geodesic_distance
from .grid import load_field
from .manifest import build_manifest, input_hash, write_manifest
from .moments import FIG3_KAPPAS, FIG3_N_GRID, MomentQuery, extreme_moment, fig3_sweep, write_sweep_csv
from .montecarlo import DEFAULT_SEED, DynamicsSpec, estimate_extreme_moment, simulate_fpt, trajectory_trace
from .survival import eval_log_one_minus_survival, eval_survival, load_model

DEFAULT_OUT = "xfpt-out"


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fmt(v) -> str:
    if isinstance(v, (bool, str, int, np.integer)):
        return str(v)
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


# -- subcommands -----------------------------------------------------------------


def cmd_survival(args) -> dict:
    model = load_model(args.model)
    t = np.asarray(args.t, dtype=float)
    if t.size == 0:
        raise ConfigError("--t needs at least one time")
    S = np.atleast_1d(eval_survival(model, t))
    log1m = np.full(t.shape, -math.inf)
    pos = t > 0
    if pos.any():
        log1m[pos] = np.atleast_1d(eval_log_one_minus_survival(model, t[pos]))
    path = args.out / "survival.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "S", "log1mS"])
        for row in zip(t, S, log1m):
            w.writerow([_fmt(v) for v in row])
    return {"inputs": {"model": model.to_dict(), "t": t}, "outputs": [path]}


def cmd_fig3(args) -> dict:
    kappas = args.kappa or list(FIG3_KAPPAS)
    grid = args.N_grid or list(FIG3_N_GRID)
    tol = args.tol or 1e-8
    rows = fig3_sweep(kappas, grid, None, L=args.L, D=args.D, rel_tol=tol)
    csv_path = args.out / "fig3.csv"
    write_sweep_csv(rows, csv_path)
    series = {}
    for kap in kappas:
        sel = [r for r in rows if r["kappa"] == float(kap)]
        label = "kappa=inf" if math.isinf(kap) else f"kappa={kap:g}"
        series[label] = ([r["N"] for r in sel], [r["rel_error"] for r in sel])
    svg_path = args.out / "fig3.svg"
    svg_path.write_text(svg.line_chart(series, "Relative error of the large-N formula", "N", "relative error"))
    return {
        "inputs": {"kappa": kappas, "N_grid": grid, "L": args.L, "D": args.D, "tol": tol},
        "outputs": [csv_path, svg_path],
    }


def cmd_geodesic(args) -> dict:
    cfg = load_field(args.field)
    res = geodesic_distance(cfg.field, cfg.regions, stencil=args.stencil)
    path_csv = args.out / "geodesic_path.csv"
    with open(path_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in res.path:
            w.writerow([repr(float(x)), repr(float(y))])
    summary = args.out / "geodesic.json"
    summary.write_text(json.dumps({"length": _fmt(res.length), "reachable": res.reachable, **res.meta}, indent=2) + "\n")
    svg_path = args.out / "geodesic.svg"
    svg_path.write_text(svg.path_overlay(cfg.field, cfg.regions, highlight=res.path))
    if not res.reachable:
        raise Unreachable("obstacles disconnect the source set from the target set")
    print(f"length {res.length!r}")
    return {
        "inputs": {"field": cfg.raw, "stencil": args.stencil},
        "outputs": [path_csv, summary, svg_path],
        "field_hash": cfg.field.digest(),
        "length": res.length,
    }


def _dynamics(args) -> DynamicsSpec:
    data = _read_json(args.dynamics) if args.dynamics else {}
    if args.dt is not None:
        data["dt"] = args.dt
    if args.max_time is not None:
        data["max_time"] = args.max_time
    data.setdefault("seed", args.seed)
    if args.seed_given:
        data["seed"] = args.seed
    if "dt" not in data or "max_time" not in data:
        raise ConfigError("dynamics need dt and max_time (flags or --dynamics JSON)")
    return DynamicsSpec.from_dict(data)


def _kappa(args) -> float:
    if not args.kappa:
        return math.inf
    if len(args.kappa) != 1:
        raise ConfigError("this subcommand takes a single --kappa value")
    return float(args.kappa[0])


def cmd_simulate(args) -> dict:
    cfg = load_field(args.field)
    dyn = _dynamics(args)
    kappa = _kappa(args)
    samples = simulate_fpt(cfg.field, cfg.regions, dyn, kappa, args.n_samples)
    path = args.out / "samples.csv"
    samples.to_csv(path)
    outputs = [path]
    if args.trace:
        geo = geodesic_distance(cfg.field, cfg.regions)
        tr = trajectory_trace(cfg.field, cfg.regions, dyn, kappa, args.trace, args.stride, reference=geo.path)
        tpath = args.out / "trajectories.csv"
        tr.to_csv(tpath)
        spath = args.out / "trajectories.svg"
        shown = [p[:, 1:] for p in tr.paths[:15]]
        best = tr.fastest_path[:, 1:] if tr.fastest_path is not None else None
        spath.write_text(svg.path_overlay(cfg.field, cfg.regions, shown, best))
        outputs += [tpath, spath]
    return {
        "inputs": {"field": cfg.raw, "dynamics": dyn.to_dict(), "kappa": kappa, "n_samples": args.n_samples},
        "outputs": outputs,
        "seed": int(dyn.seed),
        "dt": dyn.dt,
        "counts": {k: samples.meta[k] for k in ("n_samples", "n_censored", "contacts", "absorptions", "redraws", "bridge_hits")},
        "field_hash": cfg.field.digest(),
        "samples_sha256": input_hash({"t": samples.times, "c": samples.censored}),
    }


COMPARE_HEADER = [
    "N", "k", "m", "mc_estimate", "mc_se", "mc_reliable", "exact", "asymptote", "L_eff",
    "mc_vs_exact_se", "mc_exact_consistent", "exact_over_asymptote", "mc_over_asymptote",
]


def cmd_compare(args) -> dict:
    cfg = load_field(args.field)
    dyn = _dynamics(args)
    kappa = _kappa(args)
    geo = geodesic_distance(cfg.field, cfg.regions)
    if not geo.reachable:
        raise Unreachable("obstacles disconnect the source set from the target set")
    spec = AsymptoticSpec(geo.length, cfg.field.D, args.m)
    model = load_model(args.model) if args.model else None
    samples = simulate_fpt(cfg.field, cfg.regions, dyn, kappa, args.n_samples)
    rows = []
    for N in args.N_grid or [100.0]:
        q = MomentQuery(N, args.k, args.m, args.tol or 1e-3)
        est = estimate_extreme_moment(samples, q, seed=int(dyn.seed))
        exact = extreme_moment(model, q).value if model is not None else math.nan
        asym = extreme_moment_asymptotic(spec, N)
        z = abs(est.value - exact) / est.se if model is not None and est.se > 0 else math.nan
        rows.append({
            "N": N, "k": args.k, "m": args.m,
            "mc_estimate": est.value, "mc_se": est.se, "mc_reliable": est.reliable,
            "exact": exact, "asymptote": asym, "L_eff": geo.length,
            "mc_vs_exact_se": z,
            "mc_exact_consistent": (z <= 3.0) if model is not None else "",
            "exact_over_asymptote": exact / asym,
            "mc_over_asymptote": est.value / asym,
        })
    path = args.out / "compare.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARE_HEADER)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in COMPARE_HEADER])
    for r in rows:
        print(
            f"N={r['N']:g} mc={r['mc_estimate']:.6g}+-{r['mc_se']:.2g} exact={r['exact']:.6g} "
            f"asymptote={r['asymptote']:.6g}"
        )
    return {
        "inputs": {
            "field": cfg.raw, "dynamics": dyn.to_dict(), "kappa": kappa, "n_samples": args.n_samples,
            "model": model.to_dict() if model is not None else None, "N_grid": args.N_grid, "k": args.k, "m": args.m,
        },
        "outputs": [path],
        "seed": int(dyn.seed),
        "field_hash": cfg.field.digest(),
        "rows": rows,
    }


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path(DEFAULT_OUT), help="output directory")
    common.add_argument("--seed", type=int, default=None, help=f"RNG seed (default {DEFAULT_SEED})")
    common.add_argument(
        "--tol", type=float, default=None,
        help="relative tolerance (default 1e-8 for quadrature, 1e-3 for Monte Carlo comparisons)",
    )
    common.add_argument("--config", type=Path, help="JSON file whose keys override the flags")

    p = argparse.ArgumentParser(prog="xfpt", description="Extreme first-passage time toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("survival", parents=[common], help="tabulate S(t) and ln(1-S(t))")
    s.add_argument("model", type=Path, help="survival model JSON")
    s.add_argument("--t", type=_float_list, default=[0.0, 0.25, 1.0], help="comma-separated times")
    s.set_defaults(func=cmd_survival)

    f = sub.add_parser("fig3", parents=[common], help="relative error of the large-N formula")
    f.add_argument("--kappa", type=_float_list, help="reactivities (inf allowed)")
    f.add_argument("--N-grid", dest="N_grid", type=_float_list, help="searcher counts")
    f.add_argument("--L", type=float, default=1.0)
    f.add_argument("--D", type=float, default=1.0)
    f.set_defaults(func=cmd_fig3)

    g = sub.add_parser("geodesic", parents=[common], help="grid geodesic length and path")
    g.add_argument("field", type=Path, help="field/region JSON")
    g.add_argument("--stencil", type=int, default=16, choices=(4, 8, 16))
    g.set_defaults(func=cmd_geodesic)

    for name, func, text in (
        ("simulate", cmd_simulate, "Monte Carlo first-passage samples"),
        ("compare", cmd_compare, "Monte Carlo vs quadrature vs large-N formula"),
    ):
        c = sub.add_parser(name, parents=[common], help=text)
        c.add_argument("field", type=Path, help="field/region JSON")
        c.add_argument("--dynamics", type=Path, help="dynamics JSON (dt, max_time, seed, drift)")
        c.add_argument("--dt", type=float)
        c.add_argument("--max-time", dest="max_time", type=float)
        c.add_argument("--n-samples", dest="n_samples", type=int, default=10_000)
        c.add_argument("--kappa", type=_float_list, help="target reactivity (default inf)")
        c.set_defaults(func=func)
        if name == "simulate":
            c.add_argument("--trace", type=int, default=0, help="also record this many trajectories")
            c.add_argument("--stride", type=int, default=10, help="trajectory recording stride")
        else:
            c.add_argument("--model", type=Path, help="exact survival model JSON for the quadrature column")
            c.add_argument("--N-grid", dest="N_grid", type=_float_list)
            c.add_argument("--k", type=int, default=1)
            c.add_argument("--m", type=int, default=1)
    return p


def _apply_config(args) -> None:
    args.seed_given = args.seed is not None
    if args.config:
        data = _read_json(args.config)
        for key, value in data.items():
            dest = key.replace("-", "_")
            if dest in ("command", "func"):
                continue
            if dest in ("out", "model", "field", "dynamics"):
                value = Path(value)
            if dest in ("kappa", "N_grid", "t") and not isinstance(value, list):
                value = [value]
            if dest in ("kappa", "N_grid", "t"):
                value = [float(v) for v in value]
            setattr(args, dest, value)
            if dest == "seed":
                args.seed_given = True
    if args.seed is None:
        args.seed = DEFAULT_SEED


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = None
    try:
        _apply_config(args)
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {out}: {exc}") from None
        args.out = out
        start = time.perf_counter()
        info = args.func(args)
        info = dict(info)
        inputs = info.pop("inputs")
        outputs = info.pop("outputs")
        info.setdefault("seed", args.seed)
        manifest = build_manifest(args.command, inputs, outputs, **info)
        manifest["elapsed_s"] = round(time.perf_counter() - start, 3)
        write_manifest(out / f"{args.command}.manifest.json", manifest)
        return 0
    except (XfptError, ValueError) as exc:
        code = 3 if isinstance(exc, NumericalError) else 2
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, "command": args.command}
        print(f"error: {exc}", file=sys.stderr)
        if out is not None:
            try:
                (out / "error.json").write_text(json.dumps(err, indent=2) + "\n")
            except OSError:
                pass
        return code


if __name__ == "__main__":
    sys.exit(main())
