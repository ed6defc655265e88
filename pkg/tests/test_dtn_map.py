import math

import numpy as np
import pytest

from dtnlab.bessel import bessel_dtn
from dtnlab.dtn_map import (
    FamilyGammaBuilder,
    adjoint_defect,
    assemble_dtn,
    gamma_boundary,
    gamma_volume,
    lipschitz_sanity,
    load_matrix,
    phi_constant,
    relative_difference,
    save_matrix,
    verify_decay_bounds,
)
from dtnlab.forward_solver import SolverConfig
from dtnlab.harmonics import degrees
from dtnlab.potentials import BumpSpec, Potential, build_discrete_family

CFG = SolverConfig(M_trunc=16, N_rad=20)
BUMP = Potential.from_bumps([BumpSpec((0.22, 0.1), 0.12, 1.3)])


def test_free_space_dtn_is_degree():
    D = assemble_dtn(Potential("constant", constant=0.0), 0.0, SolverConfig(M_trunc=40, N_rad=8), M=40)
    assert D.solver_path == "radial"
    assert np.max(np.abs(D.array - np.diag(degrees(40)))) < 1e-8


def test_constant_dtn_is_bessel_diagonal():
    D = assemble_dtn(Potential("constant", constant=7.0), 0.0, CFG, M=10)
    off = D.array - np.diag(np.diag(D.array))
    assert np.max(np.abs(off)) == 0.0
    for m in range(11):
        for p in ([0] if m == 0 else [2 * m - 1, 2 * m]):
            assert D.array[p, p] == pytest.approx(bessel_dtn(m, 7.0), rel=1e-7)


def test_gamma_of_zero_potential_vanishes():
    g = gamma_boundary(Potential.zero(), 1.0, 2.0, CFG, M=8)
    assert np.max(np.abs(g.array)) < 1e-12
    gv = gamma_volume(Potential.zero(), 1.0, 2.0, CFG, M=8)
    assert np.all(gv.M1.entries == 0)
    assert verify_decay_bounds(gv, Potential.zero(), 1.0, 2.0).C1_hat == 0.0


def test_radial_potential_gives_diagonal_gamma():
    q = Potential.from_profile(lambda r: 1.0 + np.cos(2 * math.pi * r), r0=0.5)
    g = gamma_boundary(q, 1.0, 0.8, CFG, M=10)
    A = g.array
    assert np.max(np.abs(A - np.diag(np.diag(A)))) == 0.0
    d = np.diag(A)
    assert np.allclose(d[1::2], d[2::2], rtol=0, atol=1e-15)  # cos/sin pairs share the mode value
    assert np.max(np.abs(d)) > 1e-3


def test_real_reference_gives_real_symmetric_gamma():
    g = gamma_boundary(BUMP, 0.0, 0.7, CFG, M=8, path="galerkin")
    A = g.array
    scale = np.max(np.abs(A))
    assert np.max(np.abs(A.imag)) < 1e-10 * scale
    assert np.max(np.abs(A - A.T)) < 1e-10 * scale


def test_offcenter_bump_couples_modes_and_adjoint_holds():
    g = gamma_boundary(BUMP, 1.0, 1.5, CFG, M=8, path="galerkin")
    A = g.array
    assert np.max(np.abs(A - np.diag(np.diag(A)))) > 1e-3
    gc = gamma_boundary(BUMP, -1.0, 1.5, CFG, M=8, path="galerkin")
    assert adjoint_defect(g, gc) < 1e-8


@pytest.mark.parametrize("shift, kappa2", [(1.0, 0.5), (0.0, 0.3), (0.5, 4.0)])
def test_volume_forms_match_boundary(shift, kappa2):
    gb = gamma_boundary(BUMP, shift, kappa2, CFG, M=8, path="galerkin")
    gv = gamma_volume(BUMP, shift, kappa2, CFG, M=8)
    assert relative_difference(gv.i_form.entries, gb.array) < 1e-8
    assert relative_difference(gv.l_form.entries, gb.array) < 1e-8
    assert relative_difference((gv.M1 + gv.M2).entries, gv.array) < 1e-13


def test_family_builder_matches_direct_assembly():
    fam = build_discrete_family(0.01, 1.0, 0.5, 3)
    cfg = SolverConfig(M_trunc=14, N_rad=16)
    builder = FamilyGammaBuilder(fam, 8, cfg)
    gams = builder.gammas(0.6, 1.0, [0.01, 0.001])
    assert len(gams[0.01]) == 8
    assert np.max(np.abs(gams[0.01][0].array)) == 0.0
    q = fam.member(5)
    gv = gamma_volume(q, 1.0, 0.6, cfg, M=8)
    assert relative_difference(gams[0.01][5].array, gv.array) < 1e-10
    assert relative_difference(gams[0.01][5].M1.entries, gv.M1.entries) < 1e-10
    # heights scale the same shapes
    ratio = np.max(np.abs(gams[0.001][5].array)) / np.max(np.abs(gams[0.01][5].array))
    assert ratio == pytest.approx(0.1, rel=1e-2)


def test_phi_constant():
    assert phi_constant(1.0, 1.0, 0.0) == pytest.approx(2.0 * 4.0)
    assert phi_constant(1.0, 1.0, 2.5) == pytest.approx(2.0 * (3.0 + 1.0 + 2.5))


def test_lipschitz_sanity():
    q2 = Potential.from_bumps([BumpSpec((0.0, 0.0), 0.2, 2.0)])
    same = lipschitz_sanity(q2, q2, 1.0, CFG, M=6)
    assert same.ratios == (0.0, 0.0, 0.0)
    rep = lipschitz_sanity(Potential.from_bumps([]), q2, 1.0, CFG, M=6)
    assert all(0 < r < 10 for r in rep.ratios)
    # linear regime: ratio barely moves along the segment
    assert max(rep.ratios) / min(rep.ratios) < 1.5


def test_save_load_round_trip(tmp_path):
    g = gamma_volume(BUMP, 1.0, 1.0, CFG, M=6)
    save_matrix(g, tmp_path / "g")
    back = load_matrix(tmp_path / "g")
    assert np.array_equal(back.array, g.array)
    assert back.metadata() == g.metadata()
    D = assemble_dtn(BUMP, 1.0, CFG, M=6)
    save_matrix(D, tmp_path / "d")
    assert np.array_equal(load_matrix(tmp_path / "d").array, D.array)
