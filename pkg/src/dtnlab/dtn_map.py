"""Dirichlet-to-Neumann matrices, the difference operator ``Gamma`` and its volume forms.

``Gamma(q; q_ref) = Lambda_{q + q_ref} - Lambda_{q_ref}`` is stored in the
harmonic layout ``g[nk, mj] = <Gamma Y_mj, Y_nk>``.  Besides the boundary
difference, its entries have two volume representations::

    I1 = -int q u_mj conj(Ytilde_nk)
    I2 = -int (q_ref + kappa^2)(u_mj - u0_mj) conj(Ytilde_nk)
    L1 = -int q conj(v_nk) Ytilde_mj
    L2 = -int (q_ref + kappa^2) conj(v_nk - v0_nk) Ytilde_mj

where ``u`` (``u0``) solve with ``q_ref + q`` (``q_ref``) and ``v`` (``v0``)
with ``conj(q_ref) + q`` (``conj(q_ref)``).  The ``L`` forms come from
conjugating the adjoint identity ``<Gamma(q; q_ref) f, g> = <f, Gamma(q; conj q_ref) g>``,
which puts ``q_ref`` (not its conjugate) in front of ``L2``.  The split
``M1 = I1, M2 = I2`` for ``n >= m`` and ``M1 = L1, M2 = L2`` for ``n < m``
makes both pieces decay or grow in ``l = max(m, n)`` in a controlled way.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .harmonics import HarmonicMatrix, basis_size, degrees, harmonic_indices, op_norm_s_to_minus_s
from .forward_solver import (
    BumpFamilySolver,
    SolverConfig,
    assemble,
    solve_galerkin,
    solve_radial_modes,
)
from .potentials import BumpSpec, Potential


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class DtnMatrix:
    entries: HarmonicMatrix
    kappa2: float
    potential_id: str
    solver_path: str  # "radial" | "galerkin"
    q_ref_shift: float = 0.0

    @property
    def M(self) -> int:
        return self.entries.M

    @property
    def array(self) -> np.ndarray:
        return self.entries.entries

    def metadata(self) -> dict:
        return {
            "type": "dtn",
            "M": self.M,
            "kappa2": self.kappa2,
            "potential_id": self.potential_id,
            "solver_path": self.solver_path,
            "q_ref_shift": self.q_ref_shift,
        }


@dataclass(frozen=True)
class GammaMatrix:
    entries: HarmonicMatrix
    provenance: str  # "boundary-difference" | "volume-integral"
    kappa2: float
    q_ref_shift: float
    potential_id: str = ""
    M1: HarmonicMatrix | None = None
    M2: HarmonicMatrix | None = None
    i_form: HarmonicMatrix | None = None
    l_form: HarmonicMatrix | None = None
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def M(self) -> int:
        return self.entries.M

    @property
    def array(self) -> np.ndarray:
        return self.entries.entries

    @property
    def has_split(self) -> bool:
        return self.M1 is not None and self.M2 is not None

    def metadata(self) -> dict:
        return {
            "type": "gamma",
            "M": self.M,
            "kappa2": self.kappa2,
            "q_ref_shift": self.q_ref_shift,
            "potential_id": self.potential_id,
            "provenance": self.provenance,
        }


# ---------------------------------------------------------------------------
# assembly


def _datum_order(M: int):
    return harmonic_indices(M)


def _use_radial_path(q: Potential, path: str) -> bool:
    if path == "radial":
        if not q.is_radial:
            raise ValueError("radial path requested for a non-radial potential")
        return True
    if path == "galerkin":
        return False
    if path != "auto":
        raise ValueError(f"unknown solver path {path!r}")
    return q.is_radial


def assemble_dtn(q: Potential, kappa2: float, cfg: SolverConfig = SolverConfig(), *, M: int = 16, path: str = "auto") -> DtnMatrix:
    """Truncated DtN matrix of ``Delta + q + kappa^2`` (``q`` includes its imaginary shift).

    Radial potentials take the per-mode ODE route and yield a diagonal matrix;
    everything else goes through the Galerkin solver.
    """
    if M > cfg.M_trunc:
        raise ValueError(f"M={M} exceeds M_trunc={cfg.M_trunc}")
    if _use_radial_path(q, path):
        total = q.constant + 1j * q.imaginary_shift if q.kind == "constant" else q
        sols = solve_radial_modes(total, kappa2, range(M + 1), cfg, keep_values=False)
        diag = np.array([sols[m].boundary_derivative for m in degrees(M)])
        entries, solver = np.diag(diag), "radial"
    else:
        sol = solve_galerkin(q, q.imaginary_shift, kappa2, _datum_order(M), cfg, M_out=M)
        entries, solver = sol.dtn_columns, "galerkin"
    return DtnMatrix(HarmonicMatrix(M, entries), kappa2, q.fingerprint(), solver, q.imaginary_shift)


def gamma_boundary(
    q: Potential, q_ref_shift: float, kappa2: float, cfg: SolverConfig = SolverConfig(), *, M: int = 16, path: str = "auto"
) -> GammaMatrix:
    """``Lambda_{q + q_ref} - Lambda_{q_ref}`` with ``q_ref = i * q_ref_shift``."""
    pert = q.with_shift(q_ref_shift)
    ref = Potential.zero(q.r0, q_ref_shift)
    if not _use_radial_path(pert, path):
        path = "galerkin"
    A = assemble_dtn(pert, kappa2, cfg, M=M, path=path)
    B = assemble_dtn(ref, kappa2, cfg, M=M, path=path)
    if A.M != B.M:
        raise ShapeError("truncation mismatch between DtN matrices")
    return GammaMatrix(A.entries - B.entries, "boundary-difference", kappa2, q_ref_shift, q.fingerprint())


def split_forms(I1, I2, L1, L2, M: int) -> tuple[np.ndarray, np.ndarray]:
    """``M1``/``M2`` from the I-forms where ``n >= m`` and the L-forms where ``n < m``."""
    deg = degrees(M)
    use_i = deg[:, None] >= deg[None, :]  # rows n, columns m
    return np.where(use_i, I1, L1), np.where(use_i, I2, L2)


def gamma_volume(
    q: Potential, q_ref_shift: float, kappa2: float, cfg: SolverConfig = SolverConfig(), *, M: int = 16
) -> GammaMatrix:
    """``Gamma`` from the volume integrals, with I- and L-forms and the ``M1``/``M2`` split.

    ``entries`` holds ``M1 + M2``; ``i_form`` and ``l_form`` hold the two full
    representations for cross-checking.
    """
    if q.kind == "constant":
        raise ValueError("volume forms need a compactly supported potential")
    data = _datum_order(M)
    Q0 = kappa2 + 1j * q_ref_shift

    def solve_pair(shift):
        prob = assemble(q, shift, kappa2, cfg)
        ref = assemble(Potential.zero(q.r0), shift, kappa2, cfg, disk=prob.disk)
        u = solve_galerkin(q, shift, kappa2, data, cfg, problem=prob, M_out=M)
        u0 = solve_galerkin(q, shift, kappa2, data, cfg, problem=ref, M_out=M)
        return prob, u, u0

    prob, u, u0 = solve_pair(q_ref_shift)
    if prob.coupling is None:
        z = np.zeros((basis_size(M),) * 2, dtype=complex)
        I1 = I2 = L1 = L2 = z
    else:
        I1 = -prob.q_moments(u.coefficients, u.lifting, M)
        I2 = -Q0 * prob.lift_moments(u.coefficients - u0.coefficients, M)
        probv, v, v0 = solve_pair(-q_ref_shift)
        Jv = probv.q_moments(v.coefficients, v.lifting, M)  # int q v_nk conj(Ytilde_mj), layout [mj, nk]
        Kv = probv.lift_moments(v.coefficients - v0.coefficients, M)
        # Ytilde is real, so int q conj(v) Ytilde = conj(int q v conj(Ytilde))
        L1 = -np.conj(Jv).T
        L2 = -np.conj(np.conj(Q0) * Kv).T
    M1, M2 = split_forms(I1, I2, L1, L2, M)
    return GammaMatrix(
        HarmonicMatrix(M, M1 + M2),
        "volume-integral",
        kappa2,
        q_ref_shift,
        q.fingerprint(),
        M1=HarmonicMatrix(M, M1),
        M2=HarmonicMatrix(M, M2),
        i_form=HarmonicMatrix(M, I1 + I2),
        l_form=HarmonicMatrix(M, L1 + L2),
    )


def relative_difference(a: np.ndarray, b: np.ndarray) -> float:
    """``max|a - b| / max|b|``: entrywise error measured against the matrix scale."""
    scale = float(np.max(np.abs(b))) if np.size(b) else 0.0
    diff = float(np.max(np.abs(a - b))) if np.size(a) else 0.0
    if scale == 0.0:
        return diff
    return diff / scale


def adjoint_defect(g: GammaMatrix, g_conj: GammaMatrix) -> float:
    """Relative defect of ``<Gamma(q; q_ref) Y_mj, Y_nk> = conj(<Gamma(q; conj q_ref) Y_nk, Y_mj>)``."""
    return relative_difference(g.array, np.conj(g_conj.array).T)


# ---------------------------------------------------------------------------
# families


class FamilyGammaBuilder:
    """``Gamma`` matrices (I-form, with the ``M1``/``M2`` pieces) for every member of a
    bump family, sharing per-bump assembly across members, heights and frequencies."""

    def __init__(self, family, M: int, cfg: SolverConfig):
        self.family = family
        self.M = M
        self.solver = BumpFamilySolver([family.unit_bump(i) for i in range(family.n_bumps)], M, cfg)
        self._deg = degrees(M)

    def gammas(self, kappa2: float, q_ref_shift: float, thetas: Sequence[float], members: Sequence[int] | None = None):
        """``{theta: [GammaMatrix per member]}`` at one frequency."""
        return self.sweep([(kappa2, q_ref_shift)], thetas, members)[(kappa2, q_ref_shift)]

    def sweep(self, settings: Sequence[tuple[float, float]], thetas: Sequence[float], members: Sequence[int] | None = None):
        """``{(kappa2, q_ref_shift): {theta: [GammaMatrix per member]}}``.

        Members are visited once for all settings, so each member's summed
        coupling operator is formed only once.
        """
        fam = self.family
        members = range(len(fam)) if members is None else members
        refs = {}
        for kappa2, shift in settings:
            Q0 = kappa2 + 1j * shift
            if Q0 == 0:
                raise ValueError("kappa^2 + i q_ref_shift must be nonzero")
            refs[(kappa2, shift)] = self.solver.reference(Q0)
        out = {key: {th: [] for th in thetas} for key in refs}
        for idx in members:
            bits = np.array([(idx >> i) & 1 for i in range(fam.n_bumps)], dtype=float)
            op = self.solver.member_operator(bits)
            for (kappa2, shift), ref in refs.items():
                for th in thetas:
                    res = self.solver.solve(bits, ref, scale=th, op=op)
                    out[(kappa2, shift)][th].append(self._gamma(res, kappa2, shift, idx))
        return out

    def _gamma(self, res: dict, kappa2: float, q_ref_shift: float, idx: int) -> GammaMatrix:
        I1, I2 = res["I1"], res["I2"]
        # q is real and the data Y_nk are real, so the adjoint solutions
        # satisfy conj(v_nk) = u_nk and the L-forms are transposes
        L1, L2 = I1.T, I2.T
        M1, M2 = split_forms(I1, I2, L1, L2, self.M)
        return GammaMatrix(
            HarmonicMatrix(self.M, I1 + I2),
            "volume-integral",
            kappa2,
            q_ref_shift,
            f"family-member-{idx}",
            M1=HarmonicMatrix(self.M, M1),
            M2=HarmonicMatrix(self.M, M2),
            i_form=HarmonicMatrix(self.M, I1 + I2),
            l_form=HarmonicMatrix(self.M, L1 + L2),
            extras={"iterations": res["iterations"], "method": res["method"]},
        )


# ---------------------------------------------------------------------------
# decay bounds


def phi_constant(R: float, lam: float, kappa2: float) -> float:
    """``(R + 1)((1 + R + lam + kappa^2) / lam + 1)``."""
    return (R + 1.0) * ((1.0 + R + lam + kappa2) / lam + 1.0)


@dataclass(frozen=True)
class DecayReport:
    phi: float
    C1_hat: float
    C2_hat: float
    slope: float
    slope_range: tuple[int, int]
    log_max_M1: dict
    r0: float

    @property
    def slope_target(self) -> float:
        return math.log(self.r0)

    @property
    def slope_relative_error(self) -> float:
        return abs(self.slope - self.slope_target) / abs(self.slope_target)


def verify_decay_bounds(
    g: GammaMatrix,
    q: Potential,
    q_ref_shift: float,
    kappa2: float,
    lam: float | None = None,
    *,
    ell_range: tuple[int, int] | None = None,
) -> DecayReport:
    """Fit the constants of ``|M1| <= C1 Phi (1+l) r0^l`` and
    ``|M2| <= C2 Phi (|q_ref| + kappa^2)(1+l)`` and regress ``log max|M1|`` on ``l``.

    ``lam`` defaults to ``q_ref_shift``; for ``q_ref = 0`` (``lam = 0``) the
    low-frequency convention ``Phi = 1`` is used.
    """
    if not g.has_split:
        raise ValueError("Gamma matrix carries no M1/M2 split")
    lam = q_ref_shift if lam is None else lam
    phi = phi_constant(q.R, lam, kappa2) if lam > 0 else 1.0
    M = g.M
    ell = g.entries.max_degree_grid()
    A1, A2 = np.abs(g.M1.entries), np.abs(g.M2.entries)
    r0 = q.r0
    C1 = float(np.max(A1 / (phi * (1.0 + ell) * r0**ell)))
    w2 = phi * (abs(q_ref_shift) + kappa2)
    C2 = float(np.max(A2 / (w2 * (1.0 + ell)))) if w2 > 0 else 0.0
    per_ell = {int(l): float(np.max(A1[ell == l])) for l in range(M + 1)}
    lo, hi = ell_range if ell_range is not None else (5, M - 4)
    ls = np.arange(lo, hi + 1)
    ys = np.array([per_ell[int(l)] for l in ls])
    if np.any(ys <= 0) or ls.size < 2:
        slope = float("nan")
    else:
        slope = float(np.polyfit(ls, np.log(ys), 1)[0])
    logs = {l: (math.log(v) if v > 0 else float("-inf")) for l, v in per_ell.items()}
    return DecayReport(phi, C1, C2, slope, (int(lo), int(hi)), logs, r0)


# ---------------------------------------------------------------------------
# forward-map continuity


def interpolate_potentials(q1: Potential, q2: Potential, t: float) -> Potential:
    """``q1 + t (q2 - q1)`` within the representation shared by both."""
    if q1.kind == "constant" and q2.kind == "constant":
        d = q1.to_dict()
        c = q1.constant + t * (q2.constant - q1.constant)
        d["constant"] = [c.real, c.imag]
        return Potential.from_dict(d)
    if q1.kind == "bumps" and q2.kind == "bumps":
        bumps = [BumpSpec(b.center, b.radius, (1.0 - t) * b.height) for b in q1.bumps]
        bumps += [BumpSpec(b.center, b.radius, t * b.height) for b in q2.bumps]
        bumps = [b for b in bumps if b.height != 0.0]
        return Potential.from_bumps(bumps, r0=max(q1.r0, q2.r0), imaginary_shift=q1.imaginary_shift, R=q1.R, alpha=q1.alpha)
    r0 = max(q1.r0, q2.r0)
    f1, f2 = q1.radial_profile(), q2.radial_profile()
    return Potential.from_profile(lambda r: (1.0 - t) * f1(r) + t * f2(r), r0=r0, imaginary_shift=q1.imaginary_shift)


def sup_distance(q1: Potential, q2: Potential, samples: int = 201) -> float:
    """``||Re q1 - Re q2||_inf`` (exact for constants, sampled otherwise)."""
    if q1.kind == "constant" and q2.kind == "constant":
        return abs(q1.constant - q2.constant)
    ext = max(q1.r0, q2.r0)
    xs = np.linspace(-ext, ext, samples)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = [(b.center) for q in (q1, q2) if q.kind == "bumps" for b in q.bumps]
    d = float(np.max(np.abs(np.asarray(q1.real_part(X, Y)) - np.asarray(q2.real_part(X, Y)))))
    for c in pts:
        d = max(d, abs(complex(q1.real_part(*c)) - complex(q2.real_part(*c))))
    return d


@dataclass(frozen=True)
class LipschitzReport:
    ts: tuple[float, ...]
    distances: tuple[float, ...]
    potential_distances: tuple[float, ...]
    ratios: tuple[float, ...]
    s: float


def lipschitz_sanity(
    q1: Potential,
    q2: Potential,
    kappa2: float,
    cfg: SolverConfig = SolverConfig(),
    *,
    ts: Sequence[float] = (1.0, 0.5, 0.25),
    M: int = 12,
    s: float = 0.5,
) -> LipschitzReport:
    """``||Lambda_{q1} - Lambda_{q_t}||_{s -> -s} / ||q1 - q_t||_inf`` along ``q_t = q1 + t (q2 - q1)``."""
    base = assemble_dtn(q1, kappa2, cfg, M=M)
    dists, pdists, ratios = [], [], []
    for t in ts:
        qt = interpolate_potentials(q1, q2, t)
        pd = sup_distance(q1, qt)
        if pd == 0.0:
            dists.append(0.0)
            pdists.append(0.0)
            ratios.append(0.0)
            continue
        D = assemble_dtn(qt, kappa2, cfg, M=M)
        dd = op_norm_s_to_minus_s(D.entries - base.entries, s)
        dists.append(dd)
        pdists.append(pd)
        ratios.append(dd / pd)
    return LipschitzReport(tuple(ts), tuple(dists), tuple(pdists), tuple(ratios), s)


# ---------------------------------------------------------------------------
# serialization


def save_matrix(obj: DtnMatrix | GammaMatrix, prefix: str | Path) -> tuple[Path, Path]:
    """Write ``prefix.csv`` (index map + entries) and ``prefix.json`` (metadata).

    Floats are written with :func:`repr`, which round-trips binary64 exactly.
    """
    prefix = Path(prefix)
    csv_path, json_path = prefix.with_suffix(".csv"), prefix.with_suffix(".json")
    idx = harmonic_indices(obj.M)
    A = obj.array
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "n", "k", "m", "j", "re", "im"])
        for r, rix in enumerate(idx):
            for c, cix in enumerate(idx):
                v = A[r, c]
                w.writerow([r, c, rix.m, rix.j, cix.m, cix.j, repr(float(v.real)), repr(float(v.imag))])
    meta = obj.metadata()
    meta["index_map"] = [[ix.m, ix.j] for ix in idx]
    meta["layout"] = "entry[row=(n,k), col=(m,j)] = <A Y_mj, Y_nk>"
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return csv_path, json_path


def load_matrix(prefix: str | Path) -> DtnMatrix | GammaMatrix:
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    M = meta["M"]
    n = basis_size(M)
    A = np.zeros((n, n), dtype=complex)
    with open(prefix.with_suffix(".csv"), newline="") as fh:
        rows = csv.DictReader(fh)
        for row in rows:
            A[int(row["row"]), int(row["col"])] = complex(float(row["re"]), float(row["im"]))
    H = HarmonicMatrix(M, A)
    if meta["type"] == "dtn":
        return DtnMatrix(H, meta["kappa2"], meta["potential_id"], meta["solver_path"], meta["q_ref_shift"])
    return GammaMatrix(H, meta["provenance"], meta["kappa2"], meta["q_ref_shift"], meta["potential_id"])
