"""Numerical laboratory for Dirichlet-to-Neumann maps of Schrödinger operators on the unit disk.

Modules
-------
harmonics        real circular harmonics, harmonic matrices and their norms
potentials       bump potentials and theta-separated discrete families
forward_solver   radial ODE and Galerkin solvers for (Delta + q + kappa^2) u = 0
dtn_map          DtN matrices, Gamma differences and their volume forms
entropy_nets     delta-nets for Gamma matrices and the theta-delta relations
instability_lab  frequency-perturbation scans, envelope fits and outputs
"""
__version__ = "0.1.0"

from .bessel import KAPPA1, bessel_dtn, bessel_j, first_dirichlet_eigenvalue
from .harmonics import HarmonicIndex, HarmonicMatrix, basis_size, harmonic_indices, op_norm_s_to_minus_s, x_s_norm
from .potentials import BumpSpec, DiscreteFamily, Potential, build_discrete_family
from .forward_solver import ResonanceError, ResolutionError, SolverConfig, solve_galerkin, solve_radial_modes
from .dtn_map import DtnMatrix, FamilyGammaBuilder, GammaMatrix, assemble_dtn, gamma_boundary, gamma_volume
from .entropy_nets import NetSpec, build_net_spec, ell_star, quantize_gamma, theta_delta_solve
from .instability_lab import ExperimentRecord, ScanConfig, emit_outputs, fit_envelope, run_scan

__all__ = [
    "KAPPA1",
    "bessel_dtn",
    "bessel_j",
    "first_dirichlet_eigenvalue",
    "HarmonicIndex",
    "HarmonicMatrix",
    "basis_size",
    "harmonic_indices",
    "op_norm_s_to_minus_s",
    "x_s_norm",
    "BumpSpec",
    "DiscreteFamily",
    "Potential",
    "build_discrete_family",
    "ResonanceError",
    "ResolutionError",
    "SolverConfig",
    "solve_galerkin",
    "solve_radial_modes",
    "DtnMatrix",
    "FamilyGammaBuilder",
    "GammaMatrix",
    "assemble_dtn",
    "gamma_boundary",
    "gamma_volume",
    "NetSpec",
    "build_net_spec",
    "ell_star",
    "quantize_gamma",
    "theta_delta_solve",
    "ExperimentRecord",
    "ScanConfig",
    "emit_outputs",
    "fit_envelope",
    "run_scan",
]
