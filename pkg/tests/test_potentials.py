import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtnlab.potentials import (
    BumpSpec,
    DomainError,
    GeometryError,
    ParameterError,
    Potential,
    analytic_holder_bound,
    build_discrete_family,
    dichotomy_thresholds,
    estimate_holder_norm,
    eval_potential,
    high_frequency_window,
    low_frequency_window,
    mollifier,
)


def test_eval_examples():
    assert eval_potential(Potential("constant", constant=2.0), (0.3, -0.1)) == 2.0
    q = Potential.from_bumps([BumpSpec((0.1, 0.2), 0.15, 1.0)])
    assert eval_potential(q, (0.1, 0.2)) == pytest.approx(1.0)
    shifted = q.with_shift(1.0)
    assert eval_potential(shifted, (0.9 * math.cos(1.0), 0.9 * math.sin(1.0))) == 1j


def test_eval_outside_disk():
    with pytest.raises(DomainError):
        eval_potential(Potential.zero(), (0.8, 0.8))


def test_mollifier_support_and_smoothness():
    t = np.linspace(0, 1.5, 301)
    v = mollifier(t)
    assert v[0] == 1.0
    assert np.all(v[t >= 1.0] == 0.0)
    assert np.all(np.diff(v) <= 1e-15)


def test_geometry_errors():
    with pytest.raises(GeometryError):
        Potential.from_bumps([BumpSpec((0.45, 0.0), 0.1, 1.0)], r0=0.5)
    with pytest.raises(GeometryError):
        BumpSpec((0.0, 0.0), 0.0, 1.0)
    with pytest.raises(ParameterError):
        Potential("bumps", r0=1.2)


def test_serialization_round_trip():
    qs = [
        Potential.from_bumps([BumpSpec((0.1, 0.2), 0.1, 0.7), BumpSpec((-0.2, 0.0), 0.05, -1.0)], imaginary_shift=1.0),
        Potential.from_profile(lambda r: np.cos(math.pi * r) + 1.0, r0=0.5, n=41),
        Potential("constant", constant=3.0 - 0.5j),
    ]
    for q in qs:
        back = Potential.from_json(q.to_json())
        assert back.to_dict() == q.to_dict()
        assert back.fingerprint() == q.fingerprint()


@pytest.mark.parametrize("n_bumps, size", [(1, 2), (3, 8), (8, 256)])
def test_family_sizes(n_bumps, size):
    fam = build_discrete_family(0.01, 1.0, 0.5, n_bumps)
    assert len(fam) == size


def test_family_separation_three_bumps():
    fam = build_discrete_family(0.1, 1.0, 0.5, 3)
    for a, b in itertools.combinations(range(len(fam)), 2):
        assert fam.separation(a, b) >= 0.1


def test_single_bump_family():
    fam = build_discrete_family(0.05, 1.0, 0.5, 1)
    assert fam.member(0).bumps == ()
    assert fam.separation(0, 1) == 0.05


@given(st.integers(1, 12), st.floats(1e-4, 0.05), st.floats(0.3, 0.9))
def test_family_bumps_disjoint_and_inside(n_bumps, theta, r0):
    fam = build_discrete_family(theta, 1.0, r0, n_bumps, regime=None)
    for c in fam.centers:
        assert math.hypot(*c) + fam.radius <= r0 + 1e-12
    for c1, c2 in itertools.combinations(fam.centers, 2):
        assert math.dist(c1, c2) > 2 * fam.radius


def test_family_window_errors():
    with pytest.raises(ParameterError):
        build_discrete_family(0.2, 1.0, 0.5, 3)
    with pytest.raises(ParameterError):
        build_discrete_family(-1.0, 1.0, 0.5, 3)
    assert high_frequency_window(1.0, 1.0) == pytest.approx((2 + math.log(2)) ** -2)
    assert low_frequency_window(1.0) < high_frequency_window(1.0, 1.0)


def test_cardinality_report_default_family():
    rep = build_discrete_family(1e-4, 1.0, 0.5, 6).cardinality_report()
    assert rep["log_Z"] == pytest.approx(6 * math.log(2))
    assert rep["satisfied"]


def test_holder_norm_examples():
    assert estimate_holder_norm(Potential.zero(), 1.0) == 0.0
    assert estimate_holder_norm(Potential("constant", constant=-2.5), 0.5) == pytest.approx(2.5)
    fam = build_discrete_family(0.01, 1.0, 0.5, 1)
    q = fam.member(1)
    lower = estimate_holder_norm(q, 1.0)
    assert 0.01 <= lower <= analytic_holder_bound(fam)


def test_dichotomy_example():
    dt = dichotomy_thresholds(1e-6, 1.0)
    t = 1e-3
    assert dt.upper == pytest.approx(3 * t * math.log(1000 / 3), rel=1e-12)
    assert dt.lower == pytest.approx((2 / 3) * t * math.exp(-1000 / 3), rel=1e-12)
    assert not dt.degenerate


@given(st.floats(1e-8, 0.99), st.floats(0.2, 2.0))
def test_dichotomy_ordering(theta, alpha):
    dt = dichotomy_thresholds(theta, alpha)
    assert dt.lower <= dt.upper
    assert dt.degenerate == (theta ** (-1 / (2 * alpha)) <= 3)


def test_dichotomy_degenerate_edge():
    assert dichotomy_thresholds(0.5, 1.0).degenerate
    with pytest.raises(ParameterError):
        dichotomy_thresholds(1.5, 1.0)
