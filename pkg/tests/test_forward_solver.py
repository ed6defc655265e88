import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtnlab.bessel import KAPPA1, bessel_dtn
from dtnlab.dtn_map import assemble_dtn
from dtnlab.forward_solver import (
    DiskGalerkin,
    ResolutionError,
    ResonanceError,
    SolverConfig,
    eval_harmonic_extension,
    solve_dirichlet_source,
    solve_galerkin,
    solve_radial_mode,
    solve_radial_modes,
    verify_dissipative_bound,
)
from dtnlab.harmonics import HarmonicIndex, eval_harmonic
from dtnlab.potentials import BumpSpec, Potential


def test_free_space_mode_is_power():
    for sol in solve_radial_modes(0.0, 0.0, range(8)):
        assert sol.boundary_derivative == pytest.approx(sol.m, abs=1e-12)
        assert np.max(np.abs(sol.values - sol.grid**sol.m)) < 1e-12
        assert sol.values[-1] == pytest.approx(1.0)


@given(st.integers(0, 20), st.floats(0.1, 40.0))
def test_constant_potential_matches_bessel(m, c):
    got = solve_radial_mode(c, 0.0, m).boundary_derivative
    ref = bessel_dtn(m, c)
    assert abs(got - ref) <= 1e-7 * abs(ref) + 1e-9


def test_dissipative_reference_radial_vs_galerkin():
    # q_ref = i, q = 0, kappa = 1, m = 0
    radial = solve_radial_mode(1j, 1.0, 0).boundary_derivative
    D = assemble_dtn(Potential.zero(imaginary_shift=1.0), 1.0, SolverConfig(M_trunc=8, N_rad=24), M=2, path="galerkin")
    assert abs(D.array[0, 0] - radial) <= 1e-6 * abs(radial)


def test_ode_is_fourth_order():
    q = Potential.from_profile(lambda r: 3.0 * np.cos(math.pi * r) ** 2, r0=0.5)
    vals = [solve_radial_mode(q, 2.0, 3, SolverConfig(ode_steps=n)).boundary_derivative for n in (256, 512, 4096)]
    e1, e2 = abs(vals[0] - vals[2]), abs(vals[1] - vals[2])
    assert 10.0 < e1 / e2 < 22.0


def test_resonance_detected():
    with pytest.raises(ResonanceError):
        solve_radial_mode(0.0, KAPPA1, 0)
    with pytest.raises(ResonanceError):
        assemble_dtn(Potential.zero(), KAPPA1, SolverConfig(M_trunc=6, N_rad=24), M=2, path="galerkin")


def test_galerkin_free_space_is_harmonic_extension():
    cfg = SolverConfig(M_trunc=10, N_rad=8)
    for ix in (HarmonicIndex(0, 1), HarmonicIndex(3, 2), HarmonicIndex(7, 1)):
        sol = solve_galerkin(Potential.zero(), 0.0, 0.0, ix, cfg)
        r = np.array([0.0, 0.3, 0.7, 1.0])
        phi = np.array([0.1, 1.9, 4.0, 5.5])
        exact = r**ix.m * eval_harmonic(ix, phi)
        assert np.max(np.abs(sol.evaluate(r, phi)[0] - exact)) < cfg.trace_tol


def test_galerkin_radial_bump_matches_ode():
    q = Potential.from_profile(lambda r: 2.0 * np.cos(math.pi * r) ** 2, r0=0.5)
    cfg = SolverConfig(M_trunc=12, N_rad=32)
    G = assemble_dtn(q, 1.5, cfg, M=4, path="galerkin").array
    R = assemble_dtn(q, 1.5, cfg, M=4, path="radial").array
    assert np.max(np.abs(G - R)) < 1e-6 * np.max(np.abs(R))


def test_resolution_error_for_tiny_bump():
    q = Potential.from_bumps([BumpSpec((0.3, 0.0), 0.01, 1.0)])
    with pytest.raises(ResolutionError):
        solve_galerkin(q, 1.0, 1.0, HarmonicIndex(1, 1), SolverConfig(M_trunc=8, N_rad=8, n_phi=32))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(M_trunc=0)
    with pytest.raises(ValueError):
        SolverConfig(r_start=1.5)
    with pytest.raises(ValueError):
        SolverConfig(trace_tol=1e-17)


def test_harmonic_extension_trace_and_laplacian():
    ix = HarmonicIndex(5, 1)
    for phi in (0.0, 0.7, 3.0):
        assert eval_harmonic_extension(ix, (math.cos(phi), math.sin(phi))) == pytest.approx(eval_harmonic(ix, phi), abs=1e-14)

    def lap_max(h):
        pts = [(0.3, 0.2), (-0.4, 0.1), (0.05, -0.5)]
        out = 0.0
        for x, y in pts:
            f = lambda a, b: eval_harmonic_extension(ix, (a, b))  # noqa: E731
            lap = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4 * f(x, y)) / h**2
            out = max(out, abs(lap))
        return out

    l1, l2 = lap_max(1e-2), lap_max(5e-3)
    assert l1 < 1e-2
    assert 3.0 < l1 / l2 < 5.0  # O(h^2)


def test_dissipative_bound():
    disk = DiskGalerkin(6, 8)
    assert np.all(solve_dirichlet_source(disk, 1.0 + 1j, np.zeros((13, 8), dtype=complex)) == 0)
    for k2 in (0.1, 10.0):
        rep = verify_dissipative_bound(k2, 100, seed=3)
        assert rep.passed and rep.max_ratio <= 1.02
