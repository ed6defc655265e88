"""Frequency-perturbation scans over discrete bump families.

For every ``(theta, kappa^2)`` the scan builds the ``2^n`` bump family,
computes ``Gamma`` for all members, and finds the pair with the smallest
``||Lambda_a - Lambda_b||_{s -> -s}`` (``s = (d+4)/2``) by exhaustive search.
The regime decides the reference potential: ``kappa^2 <= kappa_1/4`` uses
``q_ref = 0``, anything above uses ``q_ref = i``.  In both cases
``Gamma_a - Gamma_b = Lambda_a - Lambda_b`` for the potentials actually probed.

Records are compared against three theory curves (``T = theta^{-1/(2 alpha)}``,
``t = 1/T``)::

    high    C_R (1 + k2) [exp(-(1 + k2) T / 3) + 3 t]
    low     16 sqrt2 exp(-T / 3) + 24 sqrt2 k2 t
    merged  C_R max(1, k2) exp(-c0 max(1, k2) T) + C_R k2 t

where the constants of the first and last are fitted one-sidedly.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .bessel import KAPPA1
from .dtn_map import FamilyGammaBuilder
from .forward_solver import InvariantViolation, ResolutionError, ResonanceError, SolverConfig
from .harmonics import HarmonicMatrix, degrees, x_s_norm
from .potentials import DiscreteFamily, ParameterError, build_discrete_family, high_frequency_window, low_frequency_window

SQRT2 = math.sqrt(2.0)
NORM_FACTOR = 4.0 * SQRT2


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ScanConfig:
    """Scan grid and numerics.

    ``regime`` is ``"auto"`` (switch at ``kappa_1 / 4``), ``"high"`` or
    ``"low"``.  ``trunc_extra`` is the increment of both ``M`` and the solver's
    ``M_trunc`` used by the truncation gate (0 disables it).
    """

    alpha: float = 1.0
    thetas: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    kappa2s: tuple[float, ...] = tuple(float(k) for k in np.geomspace(0.05, 50.0, 16))
    r0: float = 0.5
    R: float = 1.0
    n_bumps: int = 6
    M: int = 24
    d: int = 2
    regime: str = "auto"
    high_shift: float = 1.0
    trunc_extra: int = 8
    seed: int = 0
    solver: SolverConfig = SolverConfig(M_trunc=32, N_rad=16)
    out_dir: str = "scan_out"
    csv_name: str = "scan.csv"
    json_name: str = "scan.json"
    plot_prefix: str = "scan"

    @property
    def s(self) -> float:
        return (self.d + 4) / 2.0

    def regime_for(self, kappa2: float) -> str:
        if self.regime == "auto":
            return "low" if kappa2 <= 0.25 * KAPPA1 else "high"
        return self.regime

    def shift_for(self, kappa2: float) -> float:
        return 0.0 if self.regime_for(kappa2) == "low" else self.high_shift

    def validate(self) -> None:
        if self.regime not in ("auto", "high", "low"):
            raise ParameterError(f"unknown regime {self.regime!r}")
        if self.d != 2:
            raise ParameterError("only d = 2 is implemented")
        if not self.thetas or not self.kappa2s:
            raise ParameterError("theta and kappa^2 lists must be nonempty")
        if self.M > self.solver.M_trunc:
            raise ParameterError(f"M = {self.M} exceeds solver M_trunc = {self.solver.M_trunc}")
        hi = high_frequency_window(self.alpha, self.R)
        lo = low_frequency_window(self.alpha)
        for k2 in self.kappa2s:
            if not k2 > 0:
                raise ParameterError("kappa^2 must be positive")
            reg = self.regime_for(k2)
            if reg == "low" and k2 > 0.25 * KAPPA1:
                raise ParameterError(f"kappa^2={k2} above kappa_1/4 in the low-frequency regime")
            upper = lo if reg == "low" else hi
            for th in self.thetas:
                if not 0.0 < th < upper:
                    raise ParameterError(f"theta={th} outside ({0}, {upper:.6g}) for the {reg} regime")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["thetas"] = list(self.thetas)
        d["kappa2s"] = list(self.kappa2s)
        d["solver"] = self.solver.to_dict()
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (output locations excluded)."""
        d = self.to_dict()
        for k in ("out_dir", "csv_name", "json_name", "plot_prefix"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_mapping(cls, data: dict) -> "ScanConfig":
        """Build from a parsed TOML/JSON mapping (``[scan]`` and ``[solver]`` tables
        or a flat mapping)."""
        scan = dict(data.get("scan", data))
        scan.pop("solver", None)
        solver = dict(data.get("solver", {}))
        if "kappa2_range" in scan:
            lo, hi, n = scan.pop("kappa2_range")
            scan["kappa2s"] = [float(k) for k in np.geomspace(lo, hi, int(n))]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(scan) - known
        if unknown:
            raise ParameterError(f"unknown scan keys: {sorted(unknown)}")
        for key in ("thetas", "kappa2s"):
            if key in scan:
                scan[key] = tuple(float(x) for x in scan[key])
        if solver:
            scan["solver"] = SolverConfig(**solver)
        return cls(**scan)


# ---------------------------------------------------------------------------
# records


CSV_COLUMNS = (
    "index",
    "regime",
    "alpha",
    "theta",
    "kappa2",
    "q_ref_shift",
    "M",
    "n_members",
    "pair_a",
    "pair_b",
    "min_svd_distance",
    "pair_xs_distance",
    "xs_bound",
    "sandwich_ok",
    "separation",
    "separation_ok",
    "trunc_rel_change",
    "high_freq_bound",
    "low_freq_bound",
    "merged_envelope",
    "flagged",
    "flag_reason",
)


@dataclass(frozen=True)
class ExperimentRecord:
    """One ``(alpha, theta, kappa^2)`` scan point.

    ``min_svd_distance`` is the exact weighted-SVD operator distance of the
    closest pair, ``xs_bound`` is ``4 sqrt2`` times that pair's ``X_s``
    distance.  ``sandwich_ok`` covers every pair of the family, not only the
    closest.  Fitted columns (``high_freq_bound``, ``merged_envelope``) are NaN until
    :func:`apply_fit`.
    """

    index: int
    regime: str
    alpha: float
    theta: float
    kappa2: float
    q_ref_shift: float
    M: int
    n_members: int
    pair_a: int = -1
    pair_b: int = -1
    min_svd_distance: float = math.nan
    pair_xs_distance: float = math.nan
    xs_bound: float = math.nan
    sandwich_ok: bool = False
    separation: float = math.nan
    separation_ok: bool = False
    trunc_rel_change: float = math.nan
    high_freq_bound: float = math.nan
    low_freq_bound: float = math.nan
    merged_envelope: float = math.nan
    flagged: bool = False
    flag_reason: str = ""

    @property
    def usable(self) -> bool:
        return not self.flagged and math.isfinite(self.min_svd_distance)

    def row(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if isinstance(v, bool):
                out.append("1" if v else "0")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_row(cls, row: dict) -> "ExperimentRecord":
        kw = {}
        for f in dataclasses.fields(cls):
            raw = row[f.name]
            if f.type in ("bool",):
                kw[f.name] = raw == "1"
            elif f.type in ("int",):
                kw[f.name] = int(raw)
            elif f.type in ("float",):
                kw[f.name] = float(raw)
            else:
                kw[f.name] = raw
        return cls(**kw)


def high_frequency_shape(theta: float, kappa2: float, alpha: float) -> float:
    """``(1+k2) [exp(-(1+k2) T / 3) + 3 / T]`` with ``T = theta^{-1/(2 alpha)}``: the
    high-frequency lower bound without its constant."""
    T = theta ** (-1.0 / (2.0 * alpha))
    return (1.0 + kappa2) * (math.exp(-(1.0 + kappa2) * T / 3.0) + 3.0 / T)


def low_frequency_bound(theta: float, kappa2: float, alpha: float) -> float:
    """``16 sqrt2 exp(-T / 3) + 24 sqrt2 k2 / T``: the explicit low-frequency lower bound."""
    T = theta ** (-1.0 / (2.0 * alpha))
    return 16.0 * SQRT2 * math.exp(-T / 3.0) + 24.0 * SQRT2 * kappa2 / T


def _log_merged_shape(theta, kappa2, alpha, c0) -> np.ndarray:
    """``log[max(1,k2) exp(-c0 max(1,k2) T) + k2 t]`` without underflow."""
    theta, kappa2 = np.asarray(theta, dtype=float), np.asarray(kappa2, dtype=float)
    T = theta ** (-1.0 / (2.0 * np.asarray(alpha, dtype=float)))
    big = np.maximum(1.0, kappa2)
    return np.logaddexp(np.log(big) - c0 * big * T, np.log(kappa2) - np.log(T))


def merged_envelope(theta, kappa2, alpha, C_R: float, c0: float):
    """``C_R [max(1,k2) exp(-c0 max(1,k2) T) + k2 / T]``: one envelope for all frequencies."""
    return C_R * np.exp(_log_merged_shape(theta, kappa2, alpha, c0))


# ---------------------------------------------------------------------------
# one frequency


def _weighted_stack(gammas, s: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack of ``D Gamma D`` (``D = diag((1+m)^{-s})``) and the ``X_s`` weight grid."""
    deg = degrees(gammas[0].M)
    dw = (1.0 + deg) ** (-s)
    stack = np.stack([g.array for g in gammas])
    return dw[None, :, None] * stack * dw[None, None, :], (1.0 + np.maximum.outer(deg, deg)) ** (d / 2.0 - s)


def closest_pair(gammas: Sequence, s: float, d: int = 2) -> dict:
    """Exhaustive minimum of the exact ``s -> -s`` operator distance over all pairs.

    Also verifies ``||A||_{s -> -s} <= 4 sqrt2 ||A||_{X_s}`` on every pair.
    """
    n = len(gammas)
    if n < 2:
        raise ValueError("need at least two members")
    W, xs_w = _weighted_stack(gammas, s, d)
    stack = np.stack([g.array for g in gammas])
    best = (math.inf, -1, -1)
    worst_ratio = 0.0
    for a in range(n - 1):
        diffs = W[a + 1 :] - W[a]
        sv = np.linalg.svd(diffs, compute_uv=False)[:, 0]
        xs = np.max(np.abs(stack[a + 1 :] - stack[a]) * xs_w, axis=(1, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(xs > 0, sv / (NORM_FACTOR * xs), np.where(sv > 0, np.inf, 0.0))
        worst_ratio = max(worst_ratio, float(np.max(r)))
        k = int(np.argmin(sv))
        if sv[k] < best[0]:
            best = (float(sv[k]), a, a + 1 + k)
    a, b = best[1], best[2]
    pair_xs = x_s_norm(HarmonicMatrix(gammas[a].M, stack[a] - stack[b]), s)
    return {"distance": best[0], "a": a, "b": b, "xs": pair_xs, "sandwich_ratio": worst_ratio}


def _pair_distance(ga, gb, s: float) -> float:
    deg = degrees(ga.M)
    dw = (1.0 + deg) ** (-s)
    return float(np.linalg.svd(dw[:, None] * (ga.array - gb.array) * dw[None, :], compute_uv=False)[0])


_BUILDERS: dict = {}


def _builders(cfg: ScanConfig, family: DiscreteFamily):
    key = (cfg.digest(), family.centers, family.radius)
    if key not in _BUILDERS:
        main = FamilyGammaBuilder(family, cfg.M, cfg.solver)
        extra = None
        if cfg.trunc_extra > 0:
            # both the matrix and the Galerkin angular truncation move up
            finer = dataclasses.replace(cfg.solver, M_trunc=cfg.solver.M_trunc + cfg.trunc_extra)
            extra = FamilyGammaBuilder(family, cfg.M + cfg.trunc_extra, finer)
        _BUILDERS.clear()
        _BUILDERS[key] = (main, extra)
    return _BUILDERS[key]


def scan_frequency(cfg: ScanConfig, k_index: int) -> list[ExperimentRecord]:
    """All records (one per theta) at ``kappa2s[k_index]``."""
    kappa2 = cfg.kappa2s[k_index]
    regime = cfg.regime_for(kappa2)
    shift = cfg.shift_for(kappa2)
    fams = [build_discrete_family(th, cfg.alpha, cfg.r0, cfg.n_bumps, R=cfg.R, regime=regime) for th in cfg.thetas]
    main, extra = _builders(cfg, fams[0])
    base = [
        ExperimentRecord(
            index=k_index * len(cfg.thetas) + i,
            regime=regime,
            alpha=cfg.alpha,
            theta=th,
            kappa2=kappa2,
            q_ref_shift=shift,
            M=cfg.M,
            n_members=len(fams[i]),
            low_freq_bound=low_frequency_bound(th, kappa2, cfg.alpha),
        )
        for i, th in enumerate(cfg.thetas)
    ]
    try:
        gammas = main.gammas(kappa2, shift, cfg.thetas)
    except (ResonanceError, ResolutionError, InvariantViolation, np.linalg.LinAlgError) as exc:
        return [dataclasses.replace(r, flagged=True, flag_reason=f"{type(exc).__name__}: {exc}") for r in base]
    out = []
    for i, th in enumerate(cfg.thetas):
        fam = fams[i]
        cp = closest_pair(gammas[th], cfg.s, cfg.d)
        a, b = cp["a"], cp["b"]
        sep = fam.separation(a, b)
        trunc = math.nan
        reason = ""
        if extra is not None:
            try:
                g2 = extra.gammas(kappa2, shift, [th], members=[a, b])[th]
                d2 = _pair_distance(g2[0], g2[1], cfg.s)
                trunc = abs(d2 - cp["distance"]) / d2 if d2 > 0 else math.inf
            except (ResonanceError, ResolutionError, InvariantViolation, np.linalg.LinAlgError) as exc:
                reason = f"truncation check: {type(exc).__name__}: {exc}"
        out.append(
            dataclasses.replace(
                base[i],
                pair_a=a,
                pair_b=b,
                min_svd_distance=cp["distance"],
                pair_xs_distance=cp["xs"],
                xs_bound=NORM_FACTOR * cp["xs"],
                sandwich_ok=cp["sandwich_ratio"] <= 1.0,
                separation=sep,
                separation_ok=sep >= th,
                trunc_rel_change=trunc,
                flagged=bool(reason),
                flag_reason=reason,
            )
        )
    return out


def _scan_job(args):
    cfg, k = args
    return scan_frequency(cfg, k)


def run_scan(cfg: ScanConfig, *, threads: int = 1, progress: str | Path | None = None) -> list[ExperimentRecord]:
    """Scan every ``(theta, kappa^2)`` of ``cfg``; records come back in config order
    (kappa^2 major, theta minor) whatever the completion order of the workers.

    With ``progress`` set, each finished frequency is appended to that JSON-lines
    file as soon as all earlier frequencies are done.
    """
    cfg.validate()
    jobs = [(cfg, k) for k in range(len(cfg.kappa2s))]
    records: list[ExperimentRecord] = []
    fh = open(progress, "w") if progress is not None else None
    try:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = pool.map(_scan_job, jobs)
                for chunk in results:
                    _emit_progress(fh, chunk)
                    records.extend(chunk)
        else:
            for job in jobs:
                chunk = _scan_job(job)
                _emit_progress(fh, chunk)
                records.extend(chunk)
    finally:
        if fh is not None:
            fh.close()
    return records


def _emit_progress(fh, chunk):
    if fh is None:
        return
    for r in chunk:
        fh.write(json.dumps(dataclasses.asdict(r), sort_keys=True, default=repr) + "\n")
    fh.flush()


# ---------------------------------------------------------------------------
# envelope fit


@dataclass(frozen=True)
class EnvelopeFit:
    C_R: float  # merged-envelope constant
    c0: float
    C_R_high: float  # constant of the high-frequency curve alone
    n_used: int
    rms_log_residual: float
    degenerate: bool
    c0_at_bound: bool
    violations: tuple[int, ...] = ()  # record indices above the fitted envelope
    spans_both_regimes: bool = True

    @property
    def one_sided(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["violations"] = list(self.violations)
        d["one_sided"] = self.one_sided
        return d


def _profile(logd, th, k2, al, c0):
    """Best one-sided ``log C_R`` for fixed ``c0`` and the resulting squared misfit."""
    ls = _log_merged_shape(th, k2, al, c0)
    logC = float(np.max(logd - ls))
    res = ls + logC - logd
    return logC, float(np.sum(res**2))


def fit_envelope(
    records: Iterable,
    *,
    c0_bounds: tuple[float, float] = (1e-6, 1e3),
    rtol: float = 1e-9,
    require_both_regimes: bool = True,
) -> EnvelopeFit:
    """Least-squares fit (in log space) of the merged two-constant envelope to the
    measured minima, constrained to lie on or above every measurement.

    For fixed ``c0`` the constrained optimum in ``log C_R`` is the largest
    log-ratio (the unconstrained optimum, a mean, never exceeds it), so the
    problem reduces to a one-dimensional search in ``log c0``: a coarse grid
    followed by bounded Brent refinement.  ``C_R_high`` is the smallest
    constant putting every record under the high-frequency curve.
    """
    recs = [r for r in records if r.usable]
    if len(recs) < 8:
        raise ValueError(f"envelope fit needs at least 8 usable records, got {len(recs)}")
    regimes = {r.regime for r in recs}
    both = {"low", "high"} <= regimes
    if require_both_regimes and not both:
        raise ValueError("envelope fit needs records from both regimes")
    pos = [r for r in recs if r.min_svd_distance > 0]
    if not pos:
        return EnvelopeFit(math.nan, math.nan, math.nan, 0, math.nan, True, False, (), both)
    logd = np.log([r.min_svd_distance for r in pos])
    th = np.array([r.theta for r in pos])
    k2 = np.array([r.kappa2 for r in pos])
    al = np.array([r.alpha for r in pos])
    lo, hi = math.log(c0_bounds[0]), math.log(c0_bounds[1])
    grid = np.linspace(lo, hi, 241)
    costs = [_profile(logd, th, k2, al, math.exp(g))[1] for g in grid]
    j = int(np.argmin(costs))
    a, b = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    if b > a:
        opt = minimize_scalar(
            lambda g: _profile(logd, th, k2, al, math.exp(g))[1], bounds=(a, b), method="bounded", options={"xatol": 1e-10}
        )
        lc0 = float(opt.x) if opt.fun <= costs[j] else float(grid[j])
    else:
        lc0 = float(grid[j])
    c0 = math.exp(lc0)
    logC, cost = _profile(logd, th, k2, al, c0)
    C_R = float(math.exp(logC) * (1.0 + 4.0 * np.finfo(float).eps))
    env = merged_envelope(np.array([r.theta for r in recs]), np.array([r.kappa2 for r in recs]), np.array([r.alpha for r in recs]), C_R, c0)
    viol = tuple(r.index for r, e in zip(recs, env) if r.min_svd_distance > e * (1.0 + rtol))
    shapes_high = np.array([high_frequency_shape(r.theta, r.kappa2, r.alpha) for r in pos])
    C_high = float(np.max(np.exp(logd) / shapes_high) * (1.0 + 4.0 * np.finfo(float).eps))
    at_bound = lc0 <= lo + 1e-6 or lc0 >= hi - 1e-6
    return EnvelopeFit(C_R, c0, C_high, len(pos), math.sqrt(cost / len(pos)), False, bool(at_bound), viol, both)


def apply_fit(records: Sequence[ExperimentRecord], fit: EnvelopeFit) -> list[ExperimentRecord]:
    """Fill the fitted theory columns."""
    out = []
    for r in records:
        if fit.degenerate:
            out.append(r)
            continue
        e_high = fit.C_R_high * high_frequency_shape(r.theta, r.kappa2, r.alpha)
        e_env = float(merged_envelope(r.theta, r.kappa2, r.alpha, fit.C_R, fit.c0))
        out.append(dataclasses.replace(r, high_freq_bound=e_high, merged_envelope=e_env))
    return out


# ---------------------------------------------------------------------------
# gates


def suppression_ratios(records: Sequence[ExperimentRecord]) -> dict[float, float]:
    """Per theta: measured distance at the largest kappa^2 over that at the smallest."""
    out = {}
    for th in sorted({r.theta for r in records}, reverse=True):
        rs = sorted((r for r in records if r.theta == th and r.usable), key=lambda r: r.kappa2)
        if len(rs) >= 2 and rs[0].min_svd_distance > 0:
            out[th] = rs[-1].min_svd_distance / rs[0].min_svd_distance
        else:
            out[th] = math.nan
    return out


def scan_gates(records: Sequence[ExperimentRecord], fit: EnvelopeFit | None, *, trunc_tol: float = 0.01, min_ratio: float = 10.0) -> dict[str, bool]:
    usable = [r for r in records if r.usable]
    gates = {
        "no_flagged_records": len(usable) == len(records),
        "norm_sandwich": all(r.sandwich_ok and r.min_svd_distance <= r.xs_bound for r in usable),
        "separation": all(r.separation_ok for r in usable),
        "truncation": all(math.isnan(r.trunc_rel_change) or r.trunc_rel_change < trunc_tol for r in usable),
    }
    if fit is not None:
        gates["fit_nondegenerate"] = not fit.degenerate
        gates["fit_constants_positive"] = bool(fit.C_R > 0 and fit.c0 > 0)
        gates["envelope_dominance"] = fit.one_sided and not fit.degenerate
        gates["suppression_ratio"] = all(v >= min_ratio for v in suppression_ratios(records).values())
    return gates


# ---------------------------------------------------------------------------
# persistence


class EmitError(OSError):
    """Output failed part way; ``manifest`` lists the files already written."""

    def __init__(self, msg, manifest):
        super().__init__(msg)
        self.manifest = list(manifest)


def write_csv(records: Sequence[ExperimentRecord], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())
    return path


def read_csv(path: str | Path) -> list[ExperimentRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError("unexpected CSV columns")
    return [ExperimentRecord.from_row(r) for r in rows]


def _plots(records, fit, prefix: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "dtnlab"
    meta = {"Date": None, "Creator": None}
    usable = [r for r in records if r.usable and r.min_svd_distance > 0]
    paths = []

    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for th in sorted({r.theta for r in usable}, reverse=True):
        rs = sorted((r for r in usable if r.theta == th), key=lambda r: r.kappa2)
        k = np.array([r.kappa2 for r in rs])
        line = ax.loglog(k, [r.min_svd_distance for r in rs], "o-", label=f"theta = {th:g}")[0]
        if fit is not None and not fit.degenerate:
            kk = np.geomspace(k.min(), k.max(), 200)
            ax.loglog(kk, merged_envelope(th, kk, rs[0].alpha, fit.C_R, fit.c0), "--", color=line.get_color(), lw=0.8)
    ax.axvline(0.25 * KAPPA1, color="0.6", lw=0.6, ls=":")
    ax.set_xlabel("kappa^2")
    ax.set_ylabel("min ||Lambda_1 - Lambda_2||")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = prefix.with_name(prefix.name + "_kappa.svg")
    fig.savefig(p, format="svg", metadata=meta)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for k2 in sorted({r.kappa2 for r in usable}):
        rs = sorted((r for r in usable if r.kappa2 == k2), key=lambda r: r.theta, reverse=True)
        T = np.array([r.theta ** (-1.0 / (2.0 * r.alpha)) for r in rs])
        line = ax.semilogy(T, [r.min_svd_distance for r in rs], "o-", ms=3, lw=0.8)[0]
        if fit is not None and not fit.degenerate:
            th = np.array([r.theta for r in rs])
            ax.semilogy(T, [fit.C_R_high * high_frequency_shape(t, k2, rs[0].alpha) for t in th], ":", color=line.get_color(), lw=0.6)
            ax.semilogy(T, merged_envelope(th, k2, rs[0].alpha, fit.C_R, fit.c0), "--", color=line.get_color(), lw=0.6)
    ax.set_xlabel("theta^(-1/(2 alpha))")
    ax.set_ylabel("min ||Lambda_1 - Lambda_2||")
    ax.set_title("dotted: high-frequency curve, dashed: merged envelope", fontsize=8)
    fig.tight_layout()
    p = prefix.with_name(prefix.name + "_theta.svg")
    fig.savefig(p, format="svg", metadata=meta)
    plt.close(fig)
    paths.append(p)
    return paths


def provenance(cfg: ScanConfig | None, fit: EnvelopeFit | None, gates: dict | None) -> dict:
    import scipy

    from . import __version__

    doc = {
        "package_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "csv_columns": list(CSV_COLUMNS),
    }
    if cfg is not None:
        doc["config"] = cfg.to_dict()
        doc["config_sha256"] = cfg.digest()
        doc["solver_tolerances"] = {
            k: v for k, v in cfg.solver.to_dict().items() if k.endswith("_tol") or k in ("cond_max", "resonance_ratio")
        }
        doc["kappa1"] = KAPPA1
    doc["fit"] = fit.to_dict() if fit is not None else None
    doc["gates"] = gates
    return doc


def emit_outputs(
    records: Sequence[ExperimentRecord],
    out_dir: str | Path,
    *,
    cfg: ScanConfig | None = None,
    fit: EnvelopeFit | None = None,
    gates: dict | None = None,
    csv_name: str = "scan.csv",
    json_name: str = "scan.json",
    plot_prefix: str = "scan",
    plots: bool = True,
) -> list[Path]:
    """Write the record CSV, the provenance JSON and (optionally) two SVG plots."""
    if not records:
        raise ValueError("no records to write")
    out = Path(out_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        written.append(write_csv(records, out / csv_name))
        doc = provenance(cfg, fit, gates)
        doc["files"] = [p.name for p in written]
        jp = out / json_name
        jp.write_text(json.dumps(doc, indent=2, sort_keys=True, default=repr) + "\n")
        written.append(jp)
        if plots:
            written.extend(_plots(records, fit, out / plot_prefix))
    except OSError as exc:
        raise EmitError(f"writing outputs to {out} failed: {exc}", written) from exc
    return written


def default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))
