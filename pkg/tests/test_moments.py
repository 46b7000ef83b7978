import math

import numpy as np
import pytest
from _support import oracles
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfinv

from xfpt import (
    CensoredTail,
    ConfigError,
    DomainError,
    Empirical,
    HalfLine,
    HalfLineDrift,
    HalfLinePartial,
    IntervalEscape,
    MomentQuery,
    NonIntegrable,
    extreme_moment,
    fig3_sweep,
    log_order_stat_survival,
    relative_error,
)

MOM = oracles()["moments"]


def _model(name):
    if name == "halfline":
        return HalfLine(1, 1)
    if name == "interval":
        return IntervalEscape(1, 1)
    if name == "drift1":
        return HalfLineDrift(1, 1, 1.0)
    return HalfLinePartial(1, 1, float(name.removeprefix("partial")))


def _parse(key):
    name, *rest = key.split("|")
    kv = dict(p.split("=") for p in rest)
    return name, float(kv["N"]), int(kv["k"]), int(kv["m"])


@pytest.mark.parametrize("key", sorted(MOM))
def test_moment_oracles(key):
    name, N, k, m = _parse(key)
    res = extreme_moment(_model(name), MomentQuery(N, k, m))
    assert res.value == pytest.approx(MOM[key], rel=1e-8)
    # the reported error estimate is honest
    assert abs(res.value - MOM[key]) <= max(res.abs_error_estimate, 1e-14 * MOM[key])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.data(), st.floats(1e-3, 0.999))
def test_order_statistic_kernel_brute_force(N, data, S):
    k = data.draw(st.integers(1, N))
    brute = sum(math.comb(N, j) * (1 - S) ** j * S ** (N - j) for j in range(k))
    got = math.exp(log_order_stat_survival(math.log(S), math.log1p(-S), N, k))
    assert got == pytest.approx(brute, rel=1e-11)


def test_kernel_k1_identity_and_domain():
    ls = np.log(np.linspace(0.01, 0.99, 9))
    np.testing.assert_array_equal(log_order_stat_survival(ls, np.log1p(-np.exp(ls)), 1e12, 1), 1e12 * ls)
    with pytest.raises(DomainError):
        log_order_stat_survival(-1.0, -1.0, 5, 6)


def test_kernel_large_N_large_k_is_finite():
    out = log_order_stat_survival(math.log(0.999999), math.log(1e-6), 1e10, 200)
    assert np.isfinite(out) and out <= 0


def test_query_validation():
    for bad in (dict(N=0.5), dict(N=2.5), dict(N=3, k=4), dict(N=3, m=0), dict(N=3, rel_tol=0.5)):
        with pytest.raises(ConfigError):
            MomentQuery(**bad)


def test_non_integrable_single_searcher():
    with pytest.raises(NonIntegrable):
        extreme_moment(HalfLine(1, 1), MomentQuery(1))
    with pytest.raises(NonIntegrable):
        extreme_moment(HalfLine(1, 1), MomentQuery(2, m=1))
    assert extreme_moment(HalfLine(1, 1), MomentQuery(5, m=2)).value > 0


def test_interval_single_searcher_mean():
    assert extreme_moment(IntervalEscape(1, 1), MomentQuery(1)).value == pytest.approx(2.0, rel=1e-8)


def test_inverse_transform_monte_carlo():
    # P(T_{1,N} > t) = erf(1/sqrt(4t))^N, so T = 1/(4 erfinv(U^(1/N))^2)
    rng = np.random.default_rng(12345)
    N = 100
    u = rng.random(1_000_000)
    t = 1.0 / (4.0 * erfinv(u ** (1.0 / N)) ** 2)
    mean, se = t.mean(), t.std(ddof=1) / math.sqrt(t.size)
    exact = extreme_moment(HalfLine(1, 1), MomentQuery(N)).value
    assert abs(mean - exact) < 4 * se


def test_empirical_single_searcher_is_sample_mean():
    rng = np.random.default_rng(3)
    t = rng.exponential(size=500)
    e = Empirical(t, np.zeros(t.size, bool))
    assert extreme_moment(e, MomentQuery(1)).value == pytest.approx(t.mean(), rel=1e-12)
    assert extreme_moment(e, MomentQuery(1, m=2)).value == pytest.approx(np.mean(t**2), rel=1e-12)


def test_empirical_censored_tail():
    t = np.linspace(0.01, 1.0, 100)
    cens = t >= 0.5
    e = Empirical(np.where(cens, 0.5, t), cens, 0.5)
    with pytest.raises(CensoredTail):
        extreme_moment(e, MomentQuery(1))
    assert extreme_moment(e, MomentQuery(50, rel_tol=1e-3)).value < 0.5


def test_defective_drift_reports_defect():
    res = extreme_moment(HalfLineDrift(1, 1, 1.0), MomentQuery(100))
    assert res.defect == pytest.approx((1 - math.exp(-1)) ** 100, rel=1e-10)
    assert res.value == pytest.approx(MOM["drift1|N=100|k=1|m=1"], rel=1e-8)


def test_moment_order_and_k():
    m = HalfLine(1, 1)
    vals = [extreme_moment(m, MomentQuery(1e4, k)).value for k in (1, 2, 5)]
    assert vals[0] < vals[1] < vals[2]
    m1 = extreme_moment(m, MomentQuery(1e4)).value
    m2 = extreme_moment(m, MomentQuery(1e4, m=2)).value
    assert m2 > m1 * m1


def test_fig3_sweep_rows(tmp_path):
    rows = fig3_sweep(kappas=(1.0, math.inf), N_grid=(1e3, 1e6), out=tmp_path / "s.csv")
    assert [(r["kappa"], r["N"]) for r in rows] == [(1.0, 1e3), (1.0, 1e6), (math.inf, 1e3), (math.inf, 1e6)]
    assert rows[3]["rel_error"] == pytest.approx(relative_error(HalfLine(1, 1), MomentQuery(1e6), 1, 1))
    assert (tmp_path / "s.csv").read_text().splitlines()[0].startswith("kappa,N,k,m")
