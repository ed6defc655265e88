"""Invariant suites shared by the ``verify`` command and the acceptance tests.

Each suite returns a :class:`CheckResult` holding the measured quantity and
the tolerance it is judged against; nothing here raises on failure.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bessel import KAPPA1, bessel_dtn, first_dirichlet_eigenvalue
from .dtn_map import (
    FamilyGammaBuilder,
    adjoint_defect,
    assemble_dtn,
    gamma_boundary,
    gamma_volume,
    relative_difference,
    verify_decay_bounds,
)
from .entropy_nets import build_net_spec, check_net_property, pigeonhole_search, theta_delta_solve
from .forward_solver import SolverConfig, verify_dissipative_bound, InvariantViolation
from .harmonics import HarmonicMatrix, basis_size, degrees, op_norm_s_to_minus_s, x_s_norm
from .potentials import BumpSpec, Potential, build_discrete_family

J01 = 2.404825558
SQRT2 = math.sqrt(2.0)


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: measured {self.value:.3e} vs tolerance {self.tol:.3e} ({self.seconds:.1f} s)"


def _timed(fn: Callable[[], tuple[float, float, bool, dict]], name: str) -> CheckResult:
    t0 = time.perf_counter()
    value, tol, ok, details = fn()
    return CheckResult(name, value, tol, ok, time.perf_counter() - t0, details)


def free_space_dtn(M: int = 40, tol: float = 1e-8) -> CheckResult:
    """``q = 0``, ``kappa = 0``: the DtN matrix is ``diag(m)``."""

    def run():
        cfg = SolverConfig(M_trunc=M, N_rad=8)
        D = assemble_dtn(Potential("constant", constant=0.0), 0.0, cfg, M=M, path="radial")
        err = float(np.max(np.abs(D.array - np.diag(degrees(M).astype(float)))))
        return err, tol, err < tol, {"M": M}

    return _timed(run, "free-space DtN equals m")


def bessel_agreement(cs=(0.5, 2.0, 10.0, 30.0), m_max: int = 25, tol: float = 1e-6) -> CheckResult:
    """Radial-ODE DtN for constant ``c = q + kappa^2`` against the Bessel series."""

    def run():
        cfg = SolverConfig(M_trunc=m_max, N_rad=8)
        worst = 0.0
        for c in cs:
            D = assemble_dtn(Potential("constant", constant=c), 0.0, cfg, M=m_max, path="radial")
            diag = np.diag(D.array)
            for m in range(m_max + 1):
                ref = bessel_dtn(m, c)
                got = diag[0 if m == 0 else 2 * m - 1]
                worst = max(worst, abs(got - ref) / abs(ref))
        return worst, tol, worst <= tol, {"c": list(cs), "m_max": m_max}

    return _timed(run, "radial DtN vs Bessel series")


def kappa1_value(tol: float = 1e-8) -> CheckResult:
    def run():
        k1 = first_dirichlet_eigenvalue()
        err = abs(math.sqrt(k1) - J01)
        return err, tol, err <= tol, {"kappa1": k1, "j01": math.sqrt(k1)}

    return _timed(run, "first Dirichlet eigenvalue j01^2")


def dissipative(kappa2s=(0.1, 1.0, 10.0), trials: int = 100, seed: int = 0, tol: float = 1.02) -> CheckResult:
    """``||v|| / ||f|| <= 1`` for ``(Delta + i + kappa^2) v = f`` with zero trace."""

    def run():
        worst = 0.0
        for i, k2 in enumerate(kappa2s):
            try:
                rep = verify_dissipative_bound(k2, trials, seed=seed + i, slack=tol - 1.0)
                worst = max(worst, rep.max_ratio)
            except InvariantViolation:
                worst = math.inf
        return worst, tol, worst <= tol, {"kappa2": list(kappa2s), "trials": trials}

    return _timed(run, "dissipative resolvent bound")


def random_bump_potentials(n: int, seed: int = 0, r0: float = 0.5) -> list[Potential]:
    """``n`` potentials with two disjoint bumps of random size, position and height."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        bumps = []
        for _ in range(2):
            rho = rng.uniform(0.06, 0.14)
            rad = rng.uniform(0.0, r0 - rho)
            ang = rng.uniform(0.0, 2 * math.pi)
            bumps.append(BumpSpec((rad * math.cos(ang), rad * math.sin(ang)), rho, rng.uniform(0.2, 2.0)))
        (c1, c2), (b1, b2) = (bumps[0].center, bumps[1].center), bumps
        if math.dist(c1, c2) > b1.radius + b2.radius:
            out.append(Potential.from_bumps(bumps, r0=r0))
    return out


def volume_identity(n: int = 5, M: int = 16, seed: int = 0, tol: float = 1e-4) -> CheckResult:
    """Boundary difference against both volume forms, plus the adjoint identity."""

    def run():
        cfg = SolverConfig(M_trunc=M + 8, N_rad=24)
        cases = [(1.0, 0.5), (1.0, 3.0), (0.0, 0.3), (1.0, 8.0), (0.5, 1.2)]
        worst = {"i_form": 0.0, "l_form": 0.0, "adjoint": 0.0}
        for q, (shift, k2) in zip(random_bump_potentials(n, seed), cases * (n // len(cases) + 1)):
            gb = gamma_boundary(q, shift, k2, cfg, M=M, path="galerkin")
            gv = gamma_volume(q, shift, k2, cfg, M=M)
            worst["i_form"] = max(worst["i_form"], relative_difference(gv.i_form.entries, gb.array))
            worst["l_form"] = max(worst["l_form"], relative_difference(gv.l_form.entries, gb.array))
            gc = gamma_boundary(q, -shift, k2, cfg, M=M, path="galerkin")
            worst["adjoint"] = max(worst["adjoint"], adjoint_defect(gb, gc))
        v = max(worst.values())
        return v, tol, v <= tol, worst

    return _timed(run, "volume forms and adjoint identity")


def norm_sandwich(n_random: int = 100, M: int = 12, s: float = 3.0, seed: int = 0, extra=(), d: int = 2) -> CheckResult:
    """``||A||_{s -> -s} <= 4 sqrt2 ||A||_{X_s}`` on random and supplied matrices."""

    def run():
        rng = np.random.default_rng(seed)
        mats = []
        for i in range(n_random):
            n = basis_size(M)
            A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            if i % 2:
                # entries matched to the X_s weight: the sharpest random case
                A = A / np.abs(A) * (1.0 + HarmonicMatrix(M, A).max_degree_grid()) ** (s - d / 2.0)
            mats.append(HarmonicMatrix(M, A))
        mats.extend(extra)
        ratios = [op_norm_s_to_minus_s(A, s) / (4.0 * SQRT2 * x_s_norm(A, s)) for A in mats]
        violations = sum(r > 1.0 for r in ratios)
        return float(max(ratios)), 1.0, violations == 0, {"matrices": len(mats), "violations": violations}

    return _timed(run, "operator norm <= 4 sqrt2 X_s norm")


def decay_bounds(rho: float = 0.02, M_pair=(24, 48), kappa2: float = 1.0, tol_slope: float = 0.1, tol_c2: float = 0.2) -> CheckResult:
    """Slope of ``log max|M1|`` against ``l`` on ``[5, 20]`` and stability of ``C2``
    when ``M`` doubles, for a bump touching the edge of ``B_{r0}``."""

    def run():
        r0 = 0.5
        q = Potential.from_bumps([BumpSpec((r0 - rho, 0.0), rho, 1.0)], r0=r0)
        reps = []
        for M in M_pair:
            g = gamma_volume(q, 1.0, kappa2, SolverConfig(M_trunc=M + 8, N_rad=24), M=M)
            reps.append(verify_decay_bounds(g, q, 1.0, kappa2, ell_range=(5, 20)))
        slope_err = reps[0].slope_relative_error
        c2_change = abs(reps[1].C2_hat - reps[0].C2_hat) / reps[0].C2_hat
        ok = slope_err <= tol_slope and c2_change <= tol_c2
        det = {
            "slope": reps[0].slope,
            "target": math.log(r0),
            "slope_rel_err": slope_err,
            "C2": [r.C2_hat for r in reps],
            "C2_change": c2_change,
        }
        return slope_err, tol_slope, ok, det

    return _timed(run, "M1 decay slope and C2 stability")


def net_property(n_members: int = 200, seed: int = 0, theta: float = 0.01, n_bumps: int = 8) -> CheckResult:
    """Quantize ``n_members`` random family members at both regimes; every
    reconstruction must lie within ``delta`` in ``X_s`` and every collision pair
    within ``8 sqrt2 delta`` in operator norm. The small-delta low-frequency
    setup must also split the sample over more than one cell."""

    def run():
        rng = np.random.default_rng(seed)
        fam = build_discrete_family(theta, 1.0, 0.5, n_bumps, regime="both")
        members = sorted(rng.choice(len(fam), size=min(n_members, len(fam)), replace=False).tolist())
        setups = {
            "high": dict(kappa2=0.1, shift=1.0, frac=0.9),
            "low": dict(kappa2=0.05, shift=0.0, frac=0.9),
            # small delta: the lattice splits the family into several cells
            "low_fine": dict(kappa2=1e-3, shift=0.0, delta=0.005),
        }
        builder = FamilyGammaBuilder(fam, 32, SolverConfig(M_trunc=40, N_rad=16))
        swept = builder.sweep([(st["kappa2"], st["shift"]) for st in setups.values()], [theta], members)
        det = {}
        ok = True
        worst = 0.0
        for regime, st in setups.items():
            kind = "high" if regime == "high" else "low"
            phi = 1.0 if kind == "low" else 2.0 * (4.0 + st["kappa2"])
            delta = st["delta"] if "delta" in st else st["frac"] * phi
            spec = build_net_spec(delta, kind, kappa2=st["kappa2"])
            gammas = swept[(st["kappa2"], st["shift"])][theta]
            checks = [check_net_property(g, spec) for g in gammas]
            within = sum(c.within for c in checks)
            rep = pigeonhole_search(fam, spec, gammas)
            coll_ok = rep.collision_bound_holds
            worst = max(worst, max(c.x_s_distance / spec.delta for c in checks))
            if rep.collisions:
                worst_coll = max(op / bound for _, _, op, bound in rep.collisions)
            else:
                worst_coll = 0.0
            det[regime] = {
                "delta": spec.delta,
                "ell_star": spec.ell_star,
                "within": within,
                "members": len(checks),
                "collisions": len(rep.collisions),
                "cells": len(set(rep.cell_hashes)),
                "worst_collision_ratio": worst_coll,
                "log_Z": rep.log_Z,
                "log_Y": rep.log_Y,
            }
            ok = ok and within == len(checks) and coll_ok and len(rep.collisions) > 0
        ok = ok and det["low_fine"]["cells"] > 1
        return worst, 1.0, ok, det

    return _timed(run, "net reconstruction and collision bound")


def theta_delta_roots(n: int = 20, tol: float = 1e-10) -> CheckResult:
    """Root residuals and envelopes of the theta-delta relations on an ``n x n`` grid."""

    def run():
        worst, below = 0.0, True
        for th in np.geomspace(1e-8, 0.05, n):
            for k2 in np.geomspace(0.05, 50.0, n):
                r = theta_delta_solve(float(th), float(k2), "high", phi=2.0 * (4.0 + k2))
                worst, below = max(worst, r.residual), below and r.below_envelope
            for k2 in np.geomspace(1e-3, 0.25 * KAPPA1, n):
                r = theta_delta_solve(float(th), float(k2), "low")
                worst, below = max(worst, r.residual), below and r.below_envelope
        return worst, tol, worst <= tol and below, {"grid": n, "below_envelopes": below}

    return _timed(run, "theta-delta roots and envelopes")


QUICK_SUITES = {
    "free_space": free_space_dtn,
    "bessel": bessel_agreement,
    "kappa1": kappa1_value,
    "dissipative": dissipative,
    "sandwich": norm_sandwich,
    "theta_delta": theta_delta_roots,
}

FULL_SUITES = {
    **QUICK_SUITES,
    "volume_identity": volume_identity,
    "decay": decay_bounds,
    "net": net_property,
}
