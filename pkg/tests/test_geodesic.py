import math

import numpy as np
import pytest
from _support import disk_detour_length
from hypothesis import given, settings
from hypothesis import strategies as st

from xfpt import (
    ConfigError,
    MetricField,
    ObstacleCrossing,
    RegionSpec,
    Unreachable,
    effective_length_for_asymptotics,
    field_from_dict,
    geodesic_distance,
    path_length,
    two_band_config,
)
from xfpt._backend import NUMBA_AVAILABLE
from xfpt.grid import field_to_dict, rle_decode, rle_encode


def _cells(nx, ny, src, tgt):
    s = np.zeros((ny, nx), bool)
    t = np.zeros((ny, nx), bool)
    s[src[1], src[0]] = True
    t[tgt[1], tgt[0]] = True
    return RegionSpec(s, t)


@pytest.mark.parametrize("scale,expected", [(1.0, 3.0), (4.0, 1.5), (0.25, 6.0)])
def test_straight_line_isotropic(scale, expected):
    fld = MetricField.uniform(31, 3, 0.1, tensor=(scale, 0.0, scale))
    res = geodesic_distance(fld, _cells(31, 3, (0, 1), (30, 1)))
    assert res.length == pytest.approx(expected, rel=1e-12)
    assert res.path[0] == pytest.approx([0.05, 0.15]) and res.path[-1] == pytest.approx([3.05, 0.15])


def test_anisotropic_tensor():
    # a = diag(4, 1): moving along x costs half as much as along y
    fld = MetricField.uniform(21, 21, 0.1, tensor=(4.0, 0.0, 1.0))
    horiz = geodesic_distance(fld, _cells(21, 21, (0, 10), (20, 10))).length
    vert = geodesic_distance(fld, _cells(21, 21, (10, 0), (10, 20))).length
    assert horiz == pytest.approx(1.0) and vert == pytest.approx(2.0)


def test_euclidean_disk_target():
    h = 1 / 200
    fld = MetricField.uniform(200, 200, h)
    reg = RegionSpec.from_primitives(fld, [{"type": "point", "at": [0.1, 0.5]}], [{"type": "disk", "center": [0.9, 0.5], "radius": 0.1}])
    assert geodesic_distance(fld, reg).length == pytest.approx(0.7, rel=0.01)


def test_detour_around_disk_obstacle():
    h = 1 / 100
    c, r = (0.5, 0.5), 0.2
    base = MetricField.uniform(100, 100, h)
    X, Y = base.centers()
    fld = base.with_obstacles((X - c[0]) ** 2 + (Y - c[1]) ** 2 <= r * r)
    res = geodesic_distance(fld, _cells(100, 100, (10, 50), (89, 50)))
    oracle = disk_detour_length((0.105, 0.505), (0.895, 0.505), c, r)
    # discrete paths only overestimate, by at most the worst-case stencil factor
    assert oracle * (1 - 2e-3) <= res.length <= oracle * _stencil_factor(0.5 * math.atan2(1, 2))
    # the reported path is feasible and its length reproduces the distance
    assert path_length(fld, res.path) == pytest.approx(res.length, rel=1e-12)


def test_unreachable_and_wall():
    fld = MetricField.uniform(20, 10, 0.1)
    wall = np.zeros((10, 20), bool)
    wall[:, 10] = True
    fld = fld.with_obstacles(wall)
    reg = _cells(20, 10, (2, 5), (17, 5))
    res = geodesic_distance(fld, reg)
    assert not res.reachable and math.isinf(res.length)
    with pytest.raises(Unreachable):
        effective_length_for_asymptotics(fld, reg)


def test_no_corner_cutting():
    fld = MetricField.uniform(4, 4, 1.0)
    obst = np.zeros((4, 4), bool)
    obst[1, 2] = obst[2, 1] = True
    obst[0, 3] = obst[3, 0] = True
    fld = fld.with_obstacles(obst)
    # (1,1) -> (2,2) only connects diagonally through two blocked corners
    assert not geodesic_distance(fld, _cells(4, 4, (1, 1), (2, 2))).reachable


def test_path_length_rejects_obstacles():
    fld = MetricField.uniform(10, 10, 0.1)
    obst = np.zeros((10, 10), bool)
    obst[5, 5] = True
    fld = fld.with_obstacles(obst)
    with pytest.raises(ObstacleCrossing):
        path_length(fld, [[0.05, 0.55], [0.95, 0.55]])
    assert path_length(fld, [[0.05, 0.15], [0.95, 0.15]]) == pytest.approx(0.9)


def _random_field(seed, n=24):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0.2, 2.0, (n, n))
    return MetricField.uniform(n, n, 1 / n).with_tensors(np.stack([lam, 0.1 * lam, lam], axis=-1))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.tuples(*[st.integers(0, 23)] * 6))
def test_metric_properties(seed, pts):
    fld = _random_field(seed)
    a, b, c = pts[0:2], pts[2:4], pts[4:6]
    if len({a, b, c}) < 3:
        return
    d = lambda p, q: geodesic_distance(fld, _cells(24, 24, p, q)).length  # noqa: E731
    assert d(a, b) == pytest.approx(d(b, a), rel=1e-12)
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


def test_monotone_in_tensor():
    fld = _random_field(1)
    reg = _cells(24, 24, (1, 1), (22, 20))
    slow = geodesic_distance(fld, reg).length
    fast = geodesic_distance(fld.with_tensors(fld.tensors * 2.0), reg).length
    assert fast == pytest.approx(slow / math.sqrt(2.0), rel=1e-12)
    boosted = fld.tensors.copy()
    boosted[:12] *= 3.0
    assert geodesic_distance(fld.with_tensors(boosted), reg).length <= slow


def _stencil_factor(theta):
    """Length ratio of the cheapest two-direction 16-stencil path to the straight line."""
    dirs = sorted(math.atan2(dy, dx) for dx, dy in [(1, 0), (2, 1), (1, 1), (1, 2), (0, 1)])
    for lo, hi in zip(dirs, dirs[1:]):
        if lo <= theta <= hi:
            return (math.sin(hi - theta) + math.sin(theta - lo)) / math.sin(hi - lo)
    raise ValueError(theta)


def test_grid_convergence_to_stencil_limit():
    # the discrete length converges to the straight line times the stencil anisotropy factor
    exact = math.hypot(0.6, 0.4) - 0.1
    limit = exact * _stencil_factor(math.atan2(0.4, 0.6))
    errs = []
    for n in (50, 100, 200, 400):
        fld = MetricField.uniform(n, n, 1 / n)
        reg = RegionSpec.from_primitives(fld, [{"type": "disk", "center": [0.2, 0.3], "radius": 0.05}], [{"type": "disk", "center": [0.8, 0.7], "radius": 0.05}])
        errs.append(abs(geodesic_distance(fld, reg).length - limit) / limit)
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 2e-3


@pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")
def test_backends_agree():
    fld = _random_field(7, n=40)
    obst = np.zeros((40, 40), bool)
    obst[10:30, 20] = True
    fld = fld.with_obstacles(obst)
    reg = _cells(40, 40, (3, 20), (37, 22))
    a = geodesic_distance(fld, reg, backend="numba")
    b = geodesic_distance(fld, reg, backend="scipy")
    assert a.length == pytest.approx(b.length, rel=1e-12)


def test_two_band_path_uses_fast_channel():
    cfg = field_from_dict(two_band_config())
    res = geodesic_distance(cfg.field, cfg.regions)
    ix, iy = cfg.field.cell_of(res.path[:, 0], res.path[:, 1])
    slow = cfg.field.eigenvalues()[1] < 0.5
    assert not slow[iy, ix].any()
    assert res.path[:, 1].max() >= 0.7
    # much shorter than the straight route through the slow block
    assert res.length < path_length(cfg.field, [[0.31, 0.31], [1.61, 0.31]])


def test_field_json_round_trip():
    cfg = field_from_dict(two_band_config())
    obst = np.zeros((cfg.field.ny, cfg.field.nx), bool)
    obst[3:7, 40:45] = True
    fld = cfg.field.with_obstacles(obst)
    raw = field_to_dict(fld, [{"type": "point", "at": [0.3, 0.3]}], [{"type": "disk", "center": [1.7, 0.3], "radius": 0.1}])
    back = field_from_dict(raw)
    assert back.field.digest() == fld.digest()
    np.testing.assert_array_equal(rle_decode(rle_encode(obst), fld.nx, fld.ny), obst)


@pytest.mark.parametrize(
    "patch",
    [
        {"tensors": [1.0, 2.0, 1.0]},
        {"alpha_band": [0.5, 1.0]},
        {"obstacles": [5, 3]},
        {"nx": 0},
    ],
)
def test_field_validation(patch):
    with pytest.raises(ConfigError):
        field_from_dict({**two_band_config(), **patch})


def test_region_validation():
    fld = MetricField.uniform(10, 10, 0.1)
    with pytest.raises(ConfigError):
        geodesic_distance(fld, _cells(10, 10, (2, 2), (2, 2)))
    empty = RegionSpec(np.zeros((10, 10), bool), np.ones((10, 10), bool))
    with pytest.raises(ConfigError):
        geodesic_distance(fld, empty)
