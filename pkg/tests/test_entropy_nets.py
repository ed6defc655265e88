import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtnlab.bessel import KAPPA1
from dtnlab.dtn_map import FamilyGammaBuilder, GammaMatrix
from dtnlab.entropy_nets import (
    ParameterError,
    RegimeError,
    build_net_spec,
    c2_constant,
    check_net_property,
    ell_star,
    eta_fitting_grid,
    fit_eta,
    pigeonhole_search,
    quantize_gamma,
    reconstruct,
    theta_delta_solve,
)
from dtnlab.forward_solver import SolverConfig
from dtnlab.harmonics import HarmonicMatrix, basis_size
from dtnlab.potentials import build_discrete_family

SQRT2 = math.sqrt(2.0)


def _brute_ell_star(delta, phi, c, tau, r0, C=4.0, horizon=200):
    thr = delta / (4 * SQRT2 * C * phi)
    lhs = lambda l: (1 + l) ** (-tau) * (r0**l + c)  # noqa: E731
    l = 0
    while True:
        if all(lhs(k) <= thr for k in range(l, l + horizon)):
            return l
        l += 1


def test_ell_star_trivial_threshold():
    # c = 0 and delta / (4 sqrt2 C'' Phi) = 1 = r0^0
    es = ell_star(4 * SQRT2 * 4.0, 1.0, 0.0, 0.0, 1.0, 0.5)
    assert es.ell_star == 0


def test_ell_star_scan_point():
    phi = 2.0 * (4.0 + 0.3)
    es = ell_star(0.2 * phi, phi, 0.3, 1.0, 1.0, 0.5)
    assert es.ell_star == _brute_ell_star(0.2 * phi, phi, 1.3, 1.0, 0.5)
    assert es.ell_star <= es.analytic_bound


@given(st.floats(1e-3, 0.99), st.floats(1e-3, 1.4), st.floats(0.5, 3.0), st.floats(0.2, 0.8))
def test_ell_star_matches_brute_force(delta, kappa2, tau, r0):
    es = ell_star(delta, 1.0, kappa2, 0.0, tau, r0)
    if es.ell_star < 400:
        assert es.ell_star == _brute_ell_star(delta, 1.0, kappa2, tau, r0)
    assert es.ell_star <= es.analytic_bound


@given(st.floats(1e-3, 0.5), st.floats(1.0, 1.9), st.floats(1e-3, 1.4))
def test_ell_star_monotone_in_delta(delta, factor, kappa2):
    a = ell_star(delta, 1.0, kappa2, 0.0, 1.0, 0.5).ell_star
    b = ell_star(min(delta * factor, 0.999), 1.0, kappa2, 0.0, 1.0, 0.5).ell_star
    assert b <= a


def test_ell_star_requires_positive_tau():
    with pytest.raises(RegimeError):
        ell_star(0.1, 1.0, 1.0, 0.0, 0.0, 0.5)


def test_c2_constant():
    # (1 + l) 0.5^l = 1, 1, 0.75, ...: the sup is attained at l = 0 and l = 1
    assert c2_constant(0.5) == 1.0
    assert c2_constant(0.8) == pytest.approx(5 * 0.8**4)


def test_net_spec_examples():
    sp = build_net_spec(4.0, "high", kappa2=1.0)
    assert sp.phi == pytest.approx(10.0)
    assert sp.s == 3.0 and sp.tau == 1.0
    assert sp.A1 == pytest.approx(4.0 * 1.0 * 10.0)
    assert sp.n_star == basis_size(sp.ell_star) ** 2
    assert sp.n_star <= 8 * (1 + sp.ell_star) ** 2
    assert sp.log_cardinality == pytest.approx(sp.n_star * (sp.log_Y1p + sp.log_Y2p))
    low = build_net_spec(0.5, "low", kappa2=0.1)
    assert low.phi == 1.0 and low.q_ref_norm == 0.0 and low.R == pytest.approx(KAPPA1 / 4)


def test_net_spec_errors():
    with pytest.raises(ParameterError):
        build_net_spec(20.0, "high", kappa2=1.0)
    with pytest.raises(ParameterError):
        build_net_spec(0.5, "low", kappa2=2.0)
    with pytest.raises(ParameterError):
        build_net_spec(1.5, "low", kappa2=0.1)
    with pytest.raises(ParameterError):
        build_net_spec(0.5, "middle", kappa2=0.1)


def test_low_frequency_cardinality_shape():
    # at kappa^2 = kappa_1 / 8, log|Y| <= eta * bracket^{2d} with the fitted eta
    eta = fit_eta(eta_fitting_grid("low"))
    for dl in (0.5, 0.05, 0.005):
        sp = build_net_spec(dl, "low", kappa2=KAPPA1 / 8)
        assert sp.log_cardinality <= eta * sp.bracket() ** 4


def _zero_gamma(M):
    n = basis_size(M)
    z = HarmonicMatrix(M, np.zeros((n, n)))
    return GammaMatrix(z, "volume-integral", 0.1, 0.0, "", z, z)


def test_zero_matrix_quantizes_to_zero_cell():
    sp = build_net_spec(0.5, "low", kappa2=0.1)
    cell = quantize_gamma(_zero_gamma(12), sp)
    assert not cell.coords1.any() and not cell.coords2.any()
    assert cell.overflow == ()
    # frozen: the hash is part of the on-disk format
    assert cell.hash64 == 8954925682442005486
    b, c = reconstruct(cell, 12)
    assert not b.any() and not c.any()


def test_quantize_rejects_short_truncation():
    sp = build_net_spec(0.5, "low", kappa2=0.1)
    with pytest.raises(ValueError):
        quantize_gamma(_zero_gamma(sp.ell_star - 1), sp)


@pytest.fixture(scope="module")
def small_family():
    fam = build_discrete_family(0.01, 1.0, 0.5, 3, regime="both")
    builder = FamilyGammaBuilder(fam, 12, SolverConfig(M_trunc=20, N_rad=16))
    return fam, builder


def test_net_property_small_family(small_family):
    fam, builder = small_family
    sp = build_net_spec(0.9, "low", kappa2=0.05)
    gammas = builder.gammas(0.05, 0.0, [0.01])[0.01]
    assert all(check_net_property(g, sp).within for g in gammas)
    rep = pigeonhole_search(fam, sp, gammas)
    assert rep.collisions and rep.collision_bound_holds
    for a, b, op, bound in rep.collisions:
        assert bound == pytest.approx(8 * SQRT2 * sp.delta)


def test_pigeonhole_singleton(small_family):
    fam, builder = small_family
    sp = build_net_spec(0.9, "low", kappa2=0.05)
    g = builder.gammas(0.05, 0.0, [0.01], members=[3])[0.01]
    rep = pigeonhole_search(fam, sp, g)
    assert rep.collisions == [] and rep.min_pair is None


def test_pigeonhole_symmetric_pair():
    # two bumps placed symmetrically: the single-bump members are rotations of each other
    fam = build_discrete_family(0.01, 1.0, 0.5, 2, regime="both")
    builder = FamilyGammaBuilder(fam, 12, SolverConfig(M_trunc=20, N_rad=16))
    gammas = builder.gammas(0.05, 0.0, [0.01])[0.01]
    rep = pigeonhole_search(fam, build_net_spec(0.9, "low", kappa2=0.05), gammas)
    assert set(rep.min_pair[:2]) == {1, 2}


@given(st.floats(1e-8, 0.05), st.floats(0.05, 50.0))
def test_theta_delta_high(theta, kappa2):
    phi = 2.0 * (4.0 + kappa2)
    r = theta_delta_solve(theta, kappa2, "high", phi=phi)
    assert 0 < r.delta < phi
    assert r.residual <= 1e-10
    assert r.below_envelope


@given(st.floats(1e-8, 0.05), st.floats(1e-3, KAPPA1 / 4))
def test_theta_delta_low(theta, kappa2):
    r = theta_delta_solve(theta, kappa2, "low")
    assert 0 < r.delta < 1
    assert r.residual <= 1e-10
    assert r.below_envelope


def test_theta_delta_window():
    with pytest.raises(ParameterError):
        theta_delta_solve(0.5, 1.0, "high", phi=10.0)
