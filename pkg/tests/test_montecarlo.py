import csv
import math

import numpy as np
import pytest
from _support import strip
from scipy import integrate
from scipy.special import erfinv

from xfpt import (
    ConfigError,
    DynamicsSpec,
    FptSampleSet,
    HalfLine,
    MetricField,
    MomentQuery,
    RegionSpec,
    estimate_extreme_moment,
    extreme_moment,
    field_from_dict,
    geodesic_distance,
    simulate_fpt,
    trajectory_trace,
    two_band_config,
)
from xfpt._backend import NUMBA_AVAILABLE
from xfpt.montecarlo import StepSizeWarning, absorption_probability, replay_path

needs_numba = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def _box_with_obstacle():
    fld = MetricField.uniform(20, 20, 0.05, tensor=(1.0, 0.3, 0.5))
    obst = np.zeros((20, 20), bool)
    obst[5:15, 9:11] = True
    fld = fld.with_obstacles(obst)
    reg = RegionSpec.from_primitives(
        fld, [{"type": "point", "at": [0.2, 0.5]}], [{"type": "rect", "min": [0.85, 0.0], "max": [1.0, 0.3]}]
    )
    return fld, reg


def test_deterministic_and_thread_independent(monkeypatch):
    fld, reg = strip(L=0.5, back=0.5)
    dyn = DynamicsSpec(dt=1e-4, max_time=0.5, seed=5)
    monkeypatch.setenv("XFPT_THREADS", "1")
    a = simulate_fpt(fld, reg, dyn, n_samples=10_000)
    monkeypatch.setenv("XFPT_THREADS", "4")
    b = simulate_fpt(fld, reg, dyn, n_samples=10_000)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.censored, b.censored)
    c = simulate_fpt(fld, reg, DynamicsSpec(dt=1e-4, max_time=0.5, seed=6), n_samples=10_000)
    assert not np.array_equal(a.times, c.times)


def test_prefix_stability():
    # sample i only depends on (seed, i)
    fld, reg = strip(L=0.5, back=0.5)
    dyn = DynamicsSpec(dt=1e-4, max_time=0.3, seed=9)
    a = simulate_fpt(fld, reg, dyn, n_samples=5000)
    b = simulate_fpt(fld, reg, dyn, n_samples=5100)
    assert np.isin(a.times, b.times).all()


@needs_numba
@pytest.mark.parametrize("kappa", [math.inf, 2.0])
def test_backends_bit_compatible(kappa):
    fld, reg = _box_with_obstacle()
    dyn = DynamicsSpec(dt=1e-4, max_time=0.3, seed=17, drift=(0.5, -0.2))
    a = simulate_fpt(fld, reg, dyn, kappa, 300, backend="numba")
    b = simulate_fpt(fld, reg, dyn, kappa, 300, backend="numpy")
    np.testing.assert_array_equal(a.censored, b.censored)
    np.testing.assert_allclose(a.times, b.times, rtol=0, atol=1e-12)
    for key in ("contacts", "absorptions", "redraws", "bridge_hits"):
        assert a.meta[key] == b.meta[key]


def test_reflection_keeps_paths_in_free_space():
    fld, reg = _box_with_obstacle()
    dyn = DynamicsSpec(dt=2e-4, max_time=0.5, seed=3)
    tr = trajectory_trace(fld, reg, dyn, n_paths=200, record_stride=1)
    pts = np.concatenate(tr.paths)[:, 1:]
    assert (pts >= 0).all() and (pts[:, 0] <= fld.width).all() and (pts[:, 1] <= fld.height).all()
    ix, iy = fld.cell_of(pts[:, 0], pts[:, 1])
    assert not fld.obstacles[iy, ix].any()
    np.testing.assert_array_equal(tr.fastest_path, replay_path(fld, reg, dyn, math.inf, tr.fastest))


def test_drift_dominated_transport():
    eps = 1e-4
    fld, reg = strip(L=1.0, back=0.5)
    fld = fld.with_tensors(np.full((1, fld.nx, 3), [eps, 0.0, eps]))
    s = simulate_fpt(fld, reg, DynamicsSpec(dt=1e-3, max_time=2.0, seed=1, drift=(1.0, 0.0)), n_samples=2000)
    assert s.n_censored == 0
    # inverse-Gaussian passage time has mean L / b
    assert s.times.mean() == pytest.approx(1.0, rel=0.01)


def test_absorption_rate_per_contact():
    fld, reg = strip(L=0.3, back=0.3)
    dyn = DynamicsSpec(dt=1e-4, max_time=0.5, seed=8)
    s = simulate_fpt(fld, reg, dyn, kappa=1.0, n_samples=3000)
    p = absorption_probability(1.0, 1e-4, 1.0)
    n = s.meta["contacts"]
    rate = s.meta["absorptions"] / n
    assert abs(rate - p) < 4 * math.sqrt(p * (1 - p) / n)
    assert s.meta["p_abs"] == pytest.approx(p)


def test_reactivity_orders_passage_times():
    fld, reg = strip(L=1.0, back=0.5)
    means = []
    for kappa in (0.5, 2.0, math.inf):
        s = simulate_fpt(fld, reg, DynamicsSpec(dt=1e-4, max_time=30.0, seed=21), kappa, 1000)
        assert s.n_censored == 0
        means.append(s.times.mean())
    assert means[0] > means[1] > means[2]


def _exact_truncated_mean(tc):
    return integrate.quad(lambda t: float(HalfLine(1, 1).sf(t)), 0, tc, epsabs=1e-13)[0]


@pytest.mark.slow
def test_time_step_convergence():
    # E[min(T, Tc)] at two step sizes against the exact value
    fld, reg = strip(L=1.0, back=3.0)
    tc = 0.15
    exact = _exact_truncated_mean(tc)
    for dt in (1e-4, 5e-5):
        s = simulate_fpt(fld, reg, DynamicsSpec(dt=dt, max_time=tc, seed=77), n_samples=100_000)
        x = np.minimum(s.times, tc)
        se = x.std(ddof=1) / math.sqrt(x.size)
        assert abs(x.mean() - exact) < 4 * se


def test_inverse_transform_extreme_estimate():
    rng = np.random.default_rng(4)
    u = rng.random(20_000)
    t = 1.0 / (4.0 * erfinv(u) ** 2)
    s = FptSampleSet.from_times(t, max_time=50.0)
    est = estimate_extreme_moment(s, MomentQuery(100, rel_tol=1e-3), n_boot=100, seed=1)
    exact = extreme_moment(HalfLine(1, 1), MomentQuery(100)).value
    assert est.reliable
    assert abs(est.value - exact) < 3 * est.se


def test_single_searcher_estimate_is_sample_mean():
    rng = np.random.default_rng(2)
    t = rng.gamma(2.0, size=400)
    est = estimate_extreme_moment(FptSampleSet.from_times(t), MomentQuery(1), n_boot=50)
    assert est.value == pytest.approx(t.mean(), rel=1e-12)
    assert est.se == pytest.approx(t.std() / math.sqrt(t.size), rel=0.3)


def test_huge_N_is_flagged():
    rng = np.random.default_rng(2)
    s = FptSampleSet.from_times(rng.gamma(2.0, size=1000))
    est = estimate_extreme_moment(s, MomentQuery(1e8), n_boot=20)
    assert not est.reliable and "extrapolates" in est.note


def test_configuration_errors():
    fld, reg = strip(L=1.0, back=1.0)
    with pytest.raises(ConfigError):
        simulate_fpt(fld, reg, DynamicsSpec(dt=1e-2, max_time=1.0), kappa=5.0, n_samples=10)
    with pytest.raises(ConfigError):
        simulate_fpt(fld, reg, DynamicsSpec(dt=1e-4, max_time=1.0), kappa=-1.0, n_samples=10)
    with pytest.raises(ConfigError):
        DynamicsSpec(dt=0.0, max_time=1.0)
    with pytest.raises(ConfigError):
        DynamicsSpec(dt=1e-3, max_time=1.0, drift=(1.0, 2.0, 3.0)).drift_array(fld)
    with pytest.warns(StepSizeWarning):
        simulate_fpt(fld, reg, DynamicsSpec(dt=1e-2, max_time=0.02), n_samples=10)


def test_dynamics_round_trip():
    dyn = DynamicsSpec(dt=1e-4, max_time=0.3, seed=12, drift=(0.5, 0.0), bridge=False)
    back = DynamicsSpec.from_dict(dyn.to_dict())
    assert back.to_dict() == dyn.to_dict()


def test_two_band_fastest_path_avoids_slow_block():
    cfg = field_from_dict(two_band_config())
    geo = geodesic_distance(cfg.field, cfg.regions)
    tr = trajectory_trace(
        cfg.field, cfg.regions, DynamicsSpec(dt=1e-4, max_time=0.2),
        n_paths=10_000, record_stride=50, reference=geo.path,
    )
    slow = cfg.field.eigenvalues()[1] < 0.5
    assert tr.fastest >= 0
    assert tr.fraction_in(cfg.field, slow) < 0.05
    assert math.isfinite(tr.max_deviation)


@pytest.mark.slow
def test_two_band_fastest_time_ignores_weak_drift():
    # minimum of 1e4 passage times, with and without a drift away from the target
    cfg = field_from_dict(two_band_config())
    batches = {}
    for label, drift, seeds in (("free", None, range(100, 108)), ("drift", (-0.5, 0.0), range(200, 208))):
        mins = [
            simulate_fpt(cfg.field, cfg.regions, DynamicsSpec(1e-4, 0.3, seed=s, drift=drift), n_samples=10_000).times[0]
            for s in seeds
        ]
        batches[label] = (np.mean(mins), np.std(mins, ddof=1) / math.sqrt(len(mins)))
    (m0, s0), (m1, s1) = batches["free"], batches["drift"]
    assert abs(m1 - m0) < 3 * math.hypot(s0, s1)


def test_csv_outputs(tmp_path):
    fld, reg = _box_with_obstacle()
    dyn = DynamicsSpec(dt=1e-4, max_time=0.2, seed=3)
    s = simulate_fpt(fld, reg, dyn, n_samples=50)
    s.to_csv(tmp_path / "s.csv")
    back = FptSampleSet.from_csv(tmp_path / "s.csv", max_time=0.2)
    np.testing.assert_array_equal(back.times, s.times)
    np.testing.assert_array_equal(back.censored, s.censored)
    tr = trajectory_trace(fld, reg, dyn, n_paths=5, record_stride=20)
    tr.to_csv(tmp_path / "tr.csv")
    with open(tmp_path / "tr.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path_id", "step", "t", "x", "y"]
    assert len(rows) - 1 == sum(len(p) for p in tr.paths)
