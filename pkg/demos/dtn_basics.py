"""
DtN matrices of simple potentials
=================================

The Dirichlet-to-Neumann map of ``Delta + q + kappa^2`` on the unit disk is
stored as a matrix in the orthonormal circular harmonics. This script walks
through the exact cases (free space, constant potentials), then a bump
potential, where the boundary difference and the two volume forms must agree.

Run with ``python demos/dtn_basics.py``.
"""
# %%
# Free space: the harmonic extension of Y_mj is r^m Y_mj, so the DtN
# matrix is diag(0, 1, 1, 2, 2, ...).
import numpy as np

from dtnlab.bessel import KAPPA1, bessel_dtn
from dtnlab.dtn_map import adjoint_defect, assemble_dtn, gamma_boundary, gamma_volume, relative_difference
from dtnlab.forward_solver import SolverConfig
from dtnlab.harmonics import op_norm_s_to_minus_s, x_s_norm
from dtnlab.potentials import BumpSpec, Potential

cfg = SolverConfig(M_trunc=24, N_rad=24)
D0 = assemble_dtn(Potential("constant", constant=0.0), 0.0, cfg, M=6)
print("free-space diagonal:", np.round(np.diag(D0.array).real, 12))

# %%
# A constant c = q + kappa^2 gives sqrt(c) J_m'(sqrt(c)) / J_m(sqrt(c)) on the
# diagonal. Near the first Dirichlet eigenvalue j01^2 the m = 0 value blows up.
print(f"kappa_1 = j01^2 = {KAPPA1:.12f}")
for c in (0.5, 2.0, 5.0, 5.7):
    D = assemble_dtn(Potential("constant", constant=c), 0.0, cfg, M=2)
    print(f"c = {c:4.1f}: radial ODE {D.array[0, 0].real:+.10f}   series {bessel_dtn(0, c).real:+.10f}")

# %%
# An off-centre bump couples different degrees. Gamma = Lambda_{q + q_ref} -
# Lambda_{q_ref} with q_ref = i is computed three ways.
q = Potential.from_bumps([BumpSpec((0.25, 0.1), 0.12, 1.5)])
gb = gamma_boundary(q, 1.0, 2.0, cfg, M=12, path="galerkin")
gv = gamma_volume(q, 1.0, 2.0, cfg, M=12)
gc = gamma_boundary(q, -1.0, 2.0, cfg, M=12, path="galerkin")
print("I-form vs boundary difference:", f"{relative_difference(gv.i_form.entries, gb.array):.2e}")
print("L-form vs boundary difference:", f"{relative_difference(gv.l_form.entries, gb.array):.2e}")
print("adjoint identity defect:      ", f"{adjoint_defect(gb, gc):.2e}")

# %%
# The entries decay like r0^l in l = max(m, n).
# The exact s -> -s norm never exceeds 4 sqrt2 times the weighted sup norm.
A = np.abs(gb.array)
ell_grid = gb.entries.max_degree_grid()
for ell in (0, 4, 8, 12):
    print(f"max |Gamma| over entries with max(m, n) = {ell:2d}: {np.max(A[ell_grid == ell]):.3e}")
s = 3.0
print(f"||Gamma||_(3 -> -3) = {op_norm_s_to_minus_s(gb.entries, s):.4e} <= 4 sqrt2 ||Gamma||_X3 = {4 * np.sqrt(2) * x_s_norm(gb.entries, s):.4e}")
