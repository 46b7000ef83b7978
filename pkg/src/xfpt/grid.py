"""Uniform 2-D grids carrying a diffusivity tensor field, obstacles and regions.

Arrays are indexed ``[iy, ix]``; cell ``(ix, iy)`` covers
``[ix*h, (ix+1)*h) x [iy*h, (iy+1)*h)`` and its centre is ``((ix+.5)h, (iy+.5)h)``.
Tensors are stored as ``(a11, a12, a22)`` triples.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class MetricField:
    nx: int
    ny: int
    h: float
    tensors: np.ndarray  # (ny, nx, 3)
    obstacles: np.ndarray  # (ny, nx) bool
    D: float = 1.0
    alpha_band: tuple[float, float] | None = None

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("grid needs nx, ny >= 1")
        if not self.h > 0:
            raise ConfigError("cell size h must be positive")
        if not self.D > 0:
            raise ConfigError("D must be positive")
        tens = np.asarray(self.tensors, dtype=float)
        if tens.shape == (3,):
            tens = np.broadcast_to(tens, (self.ny, self.nx, 3))
        if tens.shape != (self.ny, self.nx, 3):
            raise ConfigError(f"tensors must have shape ({self.ny}, {self.nx}, 3), got {tens.shape}")
        obst = np.asarray(self.obstacles, dtype=bool)
        if obst.shape == ():
            obst = np.full((self.ny, self.nx), bool(obst))
        if obst.shape != (self.ny, self.nx):
            raise ConfigError("obstacle mask shape does not match the grid")
        object.__setattr__(self, "tensors", np.ascontiguousarray(tens))
        object.__setattr__(self, "obstacles", np.ascontiguousarray(obst))
        lo, hi = self.eigenvalues()
        free = ~obst
        if np.any(lo[free] <= 0):
            raise ConfigError("diffusivity tensors must be positive definite in free cells")
        if self.alpha_band is not None:
            a1, a2 = self.alpha_band
            if not 0 < a1 <= a2:
                raise ConfigError("alpha_band must satisfy 0 < alpha1 <= alpha2")
            tol = 1e-12 * a2
            if np.any(lo[free] < a1 - tol) or np.any(hi[free] > a2 + tol):
                raise ConfigError("tensor eigenvalues fall outside alpha_band")

    # -- geometry -----------------------------------------------------------
    @property
    def width(self) -> float:
        return self.nx * self.h

    @property
    def height(self) -> float:
        return self.ny * self.h

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two (ny, nx) arrays."""
        xs = (np.arange(self.nx) + 0.5) * self.h
        ys = (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(xs, ys)

    def cell_of(self, x, y):
        """(ix, iy) of the cell containing each point; -1 marks points outside."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ix = np.floor(x / self.h).astype(np.int64)
        iy = np.floor(y / self.h).astype(np.int64)
        # points exactly on the far wall belong to the last cell
        ix = np.where(x == self.width, self.nx - 1, ix)
        iy = np.where(y == self.height, self.ny - 1, iy)
        bad = (ix < 0) | (ix >= self.nx) | (iy < 0) | (iy >= self.ny)
        return np.where(bad, -1, ix), np.where(bad, -1, iy)

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        a, b, c = self.tensors[..., 0], self.tensors[..., 1], self.tensors[..., 2]
        mean = 0.5 * (a + c)
        rad = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
        return mean - rad, mean + rad

    def sigma(self) -> np.ndarray:
        """Principal square root of each tensor as (ny, nx, 3) triples."""
        a, b, c = self.tensors[..., 0], self.tensors[..., 1], self.tensors[..., 2]
        # sqrt of a 2x2 SPD matrix: (A + s I) / t, s = sqrt(det A), t = sqrt(tr A + 2 s)
        s = np.sqrt(np.maximum(a * c - b * b, 0.0))
        t = np.sqrt(np.maximum(a + c + 2.0 * s, 1e-300))
        return np.stack([(a + s) / t, b / t, (c + s) / t], axis=-1)

    def digest(self) -> str:
        hsh = hashlib.sha256()
        hsh.update(np.array([self.nx, self.ny], dtype=np.int64).tobytes())
        hsh.update(np.array([self.h, self.D], dtype=float).tobytes())
        hsh.update(self.tensors.tobytes())
        hsh.update(self.obstacles.tobytes())
        return hsh.hexdigest()

    # -- constructors ---------------------------------------------------------
    @classmethod
    def uniform(cls, nx, ny, h, tensor=(1.0, 0.0, 1.0), D=1.0, obstacles=None, alpha_band=None):
        obst = np.zeros((ny, nx), dtype=bool) if obstacles is None else obstacles
        return cls(nx, ny, h, np.broadcast_to(np.asarray(tensor, float), (ny, nx, 3)).copy(), obst, D, alpha_band)

    def with_tensors(self, tensors) -> "MetricField":
        return MetricField(self.nx, self.ny, self.h, tensors, self.obstacles, self.D, self.alpha_band)

    def with_obstacles(self, obstacles) -> "MetricField":
        return MetricField(self.nx, self.ny, self.h, self.tensors, obstacles, self.D, self.alpha_band)


# -- regions -------------------------------------------------------------------


def rasterize(field_: MetricField, primitives) -> np.ndarray:
    """Cells whose centre lies inside any primitive.

    Primitives: ``{"type": "disk", "center": [x, y], "radius": r}``,
    ``{"type": "rect", "min": [x0, y0], "max": [x1, y1]}``,
    ``{"type": "point", "at": [x, y]}`` (the containing cell). A disk too small to
    contain any centre marks the cell holding its centre.
    """
    X, Y = field_.centers()
    mask = np.zeros((field_.ny, field_.nx), dtype=bool)
    for prim in primitives or []:
        kind = prim.get("type")
        if kind == "disk":
            cx, cy = prim["center"]
            r = float(prim["radius"])
            inside = (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
            if not inside.any():
                inside = _point_mask(field_, cx, cy)
        elif kind == "rect":
            (x0, y0), (x1, y1) = prim["min"], prim["max"]
            inside = (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)
        elif kind == "point":
            inside = _point_mask(field_, *prim["at"])
        else:
            raise ConfigError(f"unknown region primitive {kind!r}")
        mask |= inside
    return mask


def _point_mask(field_: MetricField, x, y) -> np.ndarray:
    ix, iy = field_.cell_of(x, y)
    mask = np.zeros((field_.ny, field_.nx), dtype=bool)
    if ix < 0:
        raise ConfigError(f"point ({x}, {y}) lies outside the grid")
    mask[iy, ix] = True
    return mask


@dataclass(frozen=True, eq=False)
class RegionSpec:
    """Source set U0 and target set UT as cell masks.

    ``source_points`` optionally pins exact start positions for simulation
    (point primitives); otherwise starts are uniform over the source cells.
    """

    sources: np.ndarray
    targets: np.ndarray
    source_points: np.ndarray | None = None

    def __post_init__(self):
        src = np.asarray(self.sources, dtype=bool)
        tgt = np.asarray(self.targets, dtype=bool)
        if src.shape != tgt.shape:
            raise ConfigError("source and target masks differ in shape")
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "targets", tgt)
        if self.source_points is not None:
            object.__setattr__(self, "source_points", np.asarray(self.source_points, dtype=float).reshape(-1, 2))

    @classmethod
    def from_primitives(cls, field_: MetricField, sources, targets) -> "RegionSpec":
        src = rasterize(field_, sources)
        tgt = rasterize(field_, targets)
        pts = [p["at"] for p in sources or [] if p.get("type") == "point"]
        only_points = bool(sources) and all(p.get("type") == "point" for p in sources)
        return cls(src, tgt, np.asarray(pts, dtype=float) if only_points else None)

    def validate(self, field_: MetricField) -> None:
        if self.sources.shape != (field_.ny, field_.nx):
            raise ConfigError("region masks do not match the grid")
        if not self.sources.any():
            raise ConfigError("source set is empty")
        if not self.targets.any():
            raise ConfigError("target set is empty")
        if np.any(self.sources & self.targets):
            raise ConfigError("source and target sets must be disjoint")
        if np.any((self.sources | self.targets) & field_.obstacles):
            raise ConfigError("source/target cells overlap obstacles")


# -- JSON ----------------------------------------------------------------------


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating False/True and starting with False."""
    flat = np.asarray(mask, dtype=bool).ravel()
    runs, current, count = [], False, 0
    for v in flat:
        if bool(v) == current:
            count += 1
        else:
            runs.append(count)
            current, count = bool(v), 1
    runs.append(count)
    return runs


def rle_decode(runs, nx: int, ny: int) -> np.ndarray:
    flat = np.zeros(nx * ny, dtype=bool)
    pos, val = 0, False
    for r in runs:
        r = int(r)
        if r < 0:
            raise ConfigError("negative run length in obstacle RLE")
        flat[pos : pos + r] = val
        pos += r
        val = not val
    if pos != nx * ny:
        raise ConfigError(f"obstacle RLE covers {pos} cells, grid has {nx * ny}")
    return flat.reshape(ny, nx)


@dataclass
class FieldConfig:
    field: MetricField
    regions: RegionSpec
    raw: dict = field(default_factory=dict)


def field_from_dict(data: dict) -> FieldConfig:
    """Parse the field/region JSON object.

    Keys: ``nx, ny, h, D``; ``tensors`` (row-major ``[a11, a12, a22]`` list or a
    single triple); optional ``tensor_regions`` overrides
    (``[{"shape": primitive, "tensor": [..]}]``); ``obstacles`` as RLE run list
    or primitive list; ``sources``/``targets`` primitive lists; ``alpha_band``.
    """
    try:
        nx, ny = int(data["nx"]), int(data["ny"])
        h = float(data["h"])
        D = float(data.get("D", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"field JSON: {exc}") from None
    tens = np.asarray(data.get("tensors", [1.0, 0.0, 1.0]), dtype=float)
    if tens.shape == (3,):
        tens = np.broadcast_to(tens, (ny, nx, 3)).copy()
    elif tens.shape == (nx * ny, 3):
        tens = tens.reshape(ny, nx, 3)
    else:
        raise ConfigError(f"tensors: expected {nx * ny} triples or one triple")
    obst_spec = data.get("obstacles", [])
    skeleton = MetricField(nx, ny, h, np.broadcast_to([1.0, 0.0, 1.0], (ny, nx, 3)), np.zeros((ny, nx), bool), D)
    if obst_spec and isinstance(obst_spec[0], dict):
        obst = rasterize(skeleton, obst_spec)
    elif isinstance(obst_spec, dict) and "rle" in obst_spec:
        obst = rle_decode(obst_spec["rle"], nx, ny)
    else:
        obst = rle_decode(obst_spec, nx, ny) if obst_spec else np.zeros((ny, nx), bool)
    for override in data.get("tensor_regions", []):
        sel = rasterize(skeleton, [override["shape"]])
        tens[sel] = np.asarray(override["tensor"], dtype=float)
    band = data.get("alpha_band")
    fld = MetricField(nx, ny, h, tens, obst, D, tuple(band) if band else None)
    regions = RegionSpec.from_primitives(fld, data.get("sources", []), data.get("targets", []))
    return FieldConfig(fld, regions, data)


def load_field(path) -> FieldConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read field {path}: {exc}") from None
    return field_from_dict(data)


def field_to_dict(fld: MetricField, sources=None, targets=None) -> dict:
    return {
        "nx": fld.nx,
        "ny": fld.ny,
        "h": fld.h,
        "D": fld.D,
        "tensors": fld.tensors.reshape(-1, 3).tolist(),
        "obstacles": rle_encode(fld.obstacles),
        "sources": sources or [],
        "targets": targets or [],
        **({"alpha_band": list(fld.alpha_band)} if fld.alpha_band else {}),
    }


def two_band_config(h: float = 0.02, eps: float = 0.01) -> dict:
    """Synthetic stand-in for the heterogeneous-diffusivity illustration.

    A 2 x 1 box whose middle strip ``0.8 <= x <= 1.2`` is slow (a = eps I) except
    for a fast channel ``y >= 0.7``. Source point (0.3, 0.3), target disk at
    (1.7, 0.3) of radius 0.1; the straight line crosses the slow block.
    """
    nx, ny = int(round(2.0 / h)), int(round(1.0 / h))
    return {
        "nx": nx,
        "ny": ny,
        "h": h,
        "D": 1.0,
        "tensors": [1.0, 0.0, 1.0],
        "tensor_regions": [
            {"shape": {"type": "rect", "min": [0.8, 0.0], "max": [1.2, 0.7]}, "tensor": [eps, 0.0, eps]}
        ],
        "obstacles": [],
        "sources": [{"type": "point", "at": [0.3, 0.3]}],
        "targets": [{"type": "disk", "center": [1.7, 0.3], "radius": 0.1}],
        "alpha_band": [eps, 1.0],
    }


def json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(f"not JSON serializable: {type(o)}")
