import math

import pytest

from xfpt import (
    AsymptoticSpec,
    DomainError,
    HalfLine,
    HalfLinePartial,
    MomentQuery,
    extreme_moment,
    extreme_moment_asymptotic,
    invariance_report,
)
from xfpt.asymptotics import approaching_one


def test_formula():
    assert extreme_moment_asymptotic(AsymptoticSpec(2.0, 0.5), math.e) == pytest.approx(2.0)
    assert extreme_moment_asymptotic(AsymptoticSpec(1.0, 1.0, m=2), 1e4) == pytest.approx((1 / (4 * math.log(1e4))) ** 2)


@pytest.mark.parametrize("bad", [dict(L_eff=0, D=1), dict(L_eff=math.inf, D=1), dict(L_eff=1, D=0), dict(L_eff=1, D=1, m=0)])
def test_spec_validation(bad):
    with pytest.raises(DomainError):
        AsymptoticSpec(**bad)


def test_requires_N_above_one():
    with pytest.raises(DomainError):
        extreme_moment_asymptotic(AsymptoticSpec(1, 1), 1.0)


def test_quadrature_ratio_tends_to_one():
    spec = AsymptoticSpec(1, 1)
    ratios = [extreme_moment(HalfLine(1, 1), MomentQuery(N)).value / extreme_moment_asymptotic(spec, N) for N in (1e3, 1e6, 1e10)]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert 1.0 < ratios[-1] < 1.1


def test_invariance_report_shape(tmp_path):
    base = HalfLine(1, 1)
    rep = invariance_report(base, [base, HalfLinePartial(1, 1, 1.0)], [1e3, 1e5, 1e8])
    labels = sorted({r.variant for r in rep.rows})
    assert len(rep.rows) == 6 and len(labels) == 2
    assert rep.ratios(labels[0]) == [1.0, 1.0, 1.0]
    assert rep.approaching[labels[1]]
    rep.to_csv(tmp_path / "inv.csv")
    assert (tmp_path / "inv.csv").read_text().count("\n") == 7


def test_approaching_one():
    assert approaching_one([1.5, 1.3, 1.1])
    assert not approaching_one([1.1, 1.3, 1.5])
    assert not approaching_one([])
