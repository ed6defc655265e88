"""delta-nets for ``Gamma`` matrices in ``X_s``: truncation level, lattices and cardinalities.

A net is built in two layers.  Entries with ``l = max(m, n) <= l*`` are
rounded, separately for the ``M1`` and ``M2`` pieces, to the square lattice
``(delta' / sqrt 2)(Z + iZ)`` with ``delta' = delta / (8 sqrt 2)``, inside the
amplitude boxes ``A1 = C_box C2 Phi`` and ``A2 = C_box Phi (|q_ref| + kappa^2)(1 + l*)``.
Entries beyond ``l*`` are replaced by zero; ``l*`` is the first level from
which ``(1+l)^{-tau}(r0^l + |q_ref| + kappa^2) <= delta / (4 sqrt 2 C'' Phi)``.

``C''`` (threshold) and ``C_box`` (amplitude boxes) both stand for the entry
bound constant of the ``M1``/``M2`` estimates; they are kept separate so the
box size can be raised when quantization reports overflow without moving
``l*``.  By default ``C_box = C''``.

The frequency-dependent relation between the separation ``theta`` and the net
radius ``delta`` is solved by bisection (:func:`theta_delta_solve`).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .bessel import KAPPA1
from .harmonics import HarmonicMatrix, basis_size, degrees, op_norm_s_to_minus_s, x_s_norm

SQRT2 = math.sqrt(2.0)
DEFAULT_C_DD = 4.0


class RegimeError(ValueError):
    pass


class ParameterError(ValueError):
    pass


# ---------------------------------------------------------------------------
# truncation level


@dataclass(frozen=True)
class EllStar:
    ell_star: int
    ell1: float
    ell2: float
    threshold: float

    @property
    def analytic_bound(self) -> int:
        """``ceil(l1 + l2)``: the real number ``l1 + l2`` satisfies the defining
        inequality, so the first integer level does not exceed its ceiling."""
        return int(math.ceil(self.ell1 + self.ell2 - 1e-12))


def _lhs(ell, tau, r0, c):
    ell = np.asarray(ell, dtype=float)
    return (1.0 + ell) ** (-tau) * (r0**ell + c)


def ell_star(
    delta: float,
    phi: float,
    kappa2: float,
    q_ref_norm: float,
    tau: float,
    r0: float,
    C_dd: float = DEFAULT_C_DD,
    *,
    max_ell: int = 10**12,
) -> EllStar:
    """Smallest ``l >= 0`` with ``(1+l')^{-tau}(r0^l' + |q_ref| + kappa^2) <= delta / (4 sqrt2 C'' Phi)``
    for every ``l' >= l``, together with the analytic bounds ``l1`` and ``l2``.

    For ``tau > 0`` the left side is strictly decreasing in ``l`` (its log
    derivative ``-tau/(1+l) + r0^l log r0 / (r0^l + c)`` is negative), so the
    first crossing is final.
    """
    if not 0.0 < r0 < 1.0:
        raise ParameterError("r0 must lie in (0, 1)")
    thr = delta / (4.0 * SQRT2 * C_dd * phi)
    if not thr > 0:
        raise ParameterError("threshold must be positive")
    c = q_ref_norm + kappa2
    if tau <= 0:
        if tau == 0 and c <= thr * (1 - 1e-15):
            pass
        else:
            raise RegimeError("tau must be positive: no finite truncation level exists")
    if _lhs(0, tau, r0, c) <= thr:
        ls = 0
    else:
        hi = 1
        while _lhs(hi, tau, r0, c) > thr:
            hi *= 2
            if hi > max_ell:
                raise RegimeError("truncation level exceeds max_ell")
        lo = hi // 2  # lhs(lo) > thr
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _lhs(mid, tau, r0, c) > thr:
                lo = mid
            else:
                hi = mid
        ls = hi
    # l1: (1+l)^{-tau} r0^l = delta / (8 sqrt2 C'' Phi); l2 from the closed form
    t1 = delta / (8.0 * SQRT2 * C_dd * phi)
    if t1 >= 1.0:
        l1 = 0.0
    else:
        a, b = 0.0, 1.0
        while (1.0 + b) ** (-tau) * r0**b > t1:
            b *= 2.0
        for _ in range(200):
            mid = 0.5 * (a + b)
            if (1.0 + mid) ** (-tau) * r0**mid > t1:
                a = mid
            else:
                b = mid
        l1 = b
    l2 = max(0.0, (t1 / c) ** (-1.0 / tau) - 1.0) if c > 0 and tau > 0 else 0.0
    return EllStar(int(ls), float(l1), float(l2), float(thr))


def c2_constant(r0: float, scan: int = 100) -> float:
    """``sup_l (1 + l) r0^l`` by a finite scan (the sequence is unimodal)."""
    ls = np.arange(scan + 1)
    return float(np.max((1.0 + ls) * r0**ls))


# ---------------------------------------------------------------------------
# net specification


@dataclass(frozen=True)
class NetSpec:
    delta: float
    regime: str
    kappa2: float
    phi: float
    q_ref_norm: float
    R: float
    r0: float
    s: float
    d: int
    C_dd: float
    C_box: float
    C2: float
    ell_star: int
    ell1: float
    ell2: float
    A1: float
    A2: float
    n_star: int
    log_Y1p: float
    log_Y2p: float

    @property
    def tau(self) -> float:
        return self.s - (self.d + 2) / 2.0

    @property
    def delta_prime(self) -> float:
        return self.delta / (8.0 * SQRT2)

    @property
    def step(self) -> float:
        return self.delta_prime / SQRT2

    @property
    def log_cardinality(self) -> float:
        """``log|Y| = n* (log|Y1'| + log|Y2'|)``."""
        return self.n_star * (self.log_Y1p + self.log_Y2p)

    def bracket(self) -> float:
        """``1 + log(1 + Phi/delta) + c Phi/delta + (c Phi/delta)^{1/tau}``, ``c = |q_ref| + kappa^2``
        (with ``Phi = 1`` and ``c = kappa^2`` at low frequency)."""
        c = self.q_ref_norm + self.kappa2
        x = c * self.phi / self.delta
        return 1.0 + math.log1p(self.phi / self.delta) + x + x ** (1.0 / self.tau)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(delta_prime=self.delta_prime, step=self.step, tau=self.tau, log_cardinality=self.log_cardinality)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _box_count_log(A: float, step: float) -> float:
    return 2.0 * math.log(1.0 + 2.0 * math.floor(A / step))


def build_net_spec(
    delta: float,
    regime: str,
    *,
    kappa2: float,
    R: float | None = None,
    r0: float = 0.5,
    s: float | None = None,
    d: int = 2,
    C_dd: float = DEFAULT_C_DD,
    C_box: float | None = None,
) -> NetSpec:
    """Net parameters for ``regime`` in ``{"high", "low"}``.

    ``high``: ``q_ref = i`` (``lambda = 1``), ``Phi = (R+1)(3+R+kappa^2)``,
    ``0 < delta < Phi``.  ``low``: ``q_ref = 0``, ``R = kappa_1 / 4``,
    ``Phi = 1``, ``0 < delta < 1`` and ``kappa^2 <= kappa_1 / 4``.
    ``s`` defaults to ``(d + 4) / 2`` so that ``tau = 1``.
    """
    s = (d + 4) / 2.0 if s is None else s
    tau = s - (d + 2) / 2.0
    if tau <= 0:
        raise RegimeError("s must exceed (d + 2) / 2")
    if not kappa2 > 0:
        raise ParameterError("kappa^2 must be positive")
    if regime == "high":
        R = 1.0 if R is None else R
        phi = (R + 1.0) * (3.0 + R + kappa2)
        qn = 1.0
        if not 0.0 < delta < phi:
            raise ParameterError(f"delta={delta} outside (0, Phi={phi:.6g})")
    elif regime == "low":
        R = 0.25 * KAPPA1 if R is None else R
        phi = 1.0
        qn = 0.0
        if kappa2 > 0.25 * KAPPA1:
            raise ParameterError("low-frequency nets need kappa^2 <= kappa_1 / 4")
        if not 0.0 < delta < 1.0:
            raise ParameterError(f"delta={delta} outside (0, 1)")
    else:
        raise ParameterError(f"unknown regime {regime!r}")
    es = ell_star(delta, phi, kappa2, qn, tau, r0, C_dd)
    C_box = C_dd if C_box is None else C_box
    C2 = c2_constant(r0)
    A1 = C_box * C2 * phi
    A2 = C_box * phi * (qn + kappa2) * (1 + es.ell_star)
    step = delta / (8.0 * SQRT2) / SQRT2
    n_star = basis_size(es.ell_star) ** 2
    return NetSpec(
        delta, regime, kappa2, phi, qn, R, r0, s, d, C_dd, C_box, C2, es.ell_star, es.ell1, es.ell2, A1, A2,
        n_star, _box_count_log(A1, step), _box_count_log(A2, step),
    )


def fit_eta(specs: Sequence[NetSpec], margin: float = 1.1) -> float:
    """``margin * max log|Y| / bracket^{2d}`` over a fitting sample of specs."""
    ratios = [sp.log_cardinality / sp.bracket() ** (2 * sp.d) for sp in specs]
    return margin * max(ratios)


def eta_fitting_grid(regime: str, r0: float = 0.5, n: int = 12, C_dd: float = DEFAULT_C_DD) -> list[NetSpec]:
    """Deterministic (delta, kappa^2) sample used to freeze ``eta`` for one ``(d, s, r0)``."""
    specs = []
    if regime == "high":
        for k2 in np.geomspace(0.05, 50.0, n):
            phi = 2.0 * (4.0 + k2)
            for frac in np.geomspace(1e-3, 0.95, n):
                specs.append(build_net_spec(frac * phi, "high", kappa2=float(k2), r0=r0, C_dd=C_dd))
    else:
        for k2 in np.geomspace(1e-3, 0.25 * KAPPA1, n):
            for dl in np.geomspace(1e-3, 0.95, n):
                specs.append(build_net_spec(float(dl), "low", kappa2=float(k2), r0=r0, C_dd=C_dd))
    return specs


# ---------------------------------------------------------------------------
# quantization


def _round_half_to_zero(x: np.ndarray) -> np.ndarray:
    """Nearest integer, ties toward zero."""
    return np.sign(x) * np.ceil(np.abs(x) - 0.5)


@dataclass(frozen=True)
class NetCell:
    """Integer lattice coordinates of the ``M1`` and ``M2`` pieces up to level ``l*``."""

    ell_star: int
    step: float
    coords1: np.ndarray  # int64, shape (n, n, 2): Re/Im lattice indices
    coords2: np.ndarray
    overflow: tuple = ()

    def key(self) -> bytes:
        header = np.array([self.ell_star, self.coords1.shape[0]], dtype="<i8").tobytes()
        return header + self.coords1.astype("<i8").tobytes() + self.coords2.astype("<i8").tobytes()

    @property
    def hash64(self) -> int:
        """Stable 64-bit hash: BLAKE2b (8-byte digest) of the little-endian int64 stream
        ``[l*, side, coords1 (row-major, Re/Im interleaved), coords2]``."""
        return int.from_bytes(hashlib.blake2b(self.key(), digest_size=8).digest(), "little")

    def __eq__(self, other):
        return isinstance(other, NetCell) and self.key() == other.key() and self.step == other.step

    def __hash__(self):
        return self.hash64


def _lattice(values: np.ndarray, step: float, A: float):
    re = _round_half_to_zero(values.real / step)
    im = _round_half_to_zero(values.imag / step)
    bound = math.floor(A / step)
    over = (np.abs(values.real) > A + step) | (np.abs(values.imag) > A + step)
    coords = np.stack([np.clip(re, -bound, bound), np.clip(im, -bound, bound)], axis=-1).astype(np.int64)
    return coords, over


def quantize_gamma(g, spec: NetSpec) -> NetCell:
    """Round the ``M1``/``M2`` entries with ``l <= l*`` to the net lattice.

    Raises if ``g`` lacks the split or its truncation is below ``l*``.
    Entries lying more than one lattice step outside an amplitude box are
    listed in ``overflow`` as ``(piece, row, col)``.
    """
    if g.M1 is None or g.M2 is None:
        raise ValueError("Gamma matrix carries no M1/M2 split")
    if g.M < spec.ell_star:
        raise ValueError(f"Gamma truncation M={g.M} is below l*={spec.ell_star}")
    n = basis_size(spec.ell_star)
    c1, o1 = _lattice(g.M1.entries[:n, :n], spec.step, spec.A1)
    c2, o2 = _lattice(g.M2.entries[:n, :n], spec.step, spec.A2)
    overflow = tuple(("M1", int(r), int(c)) for r, c in zip(*np.nonzero(o1))) + tuple(
        ("M2", int(r), int(c)) for r, c in zip(*np.nonzero(o2))
    )
    return NetCell(spec.ell_star, spec.step, c1, c2, overflow)


def reconstruct(cell: NetCell, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Net point ``(b, c)`` as two ``M``-truncated complex matrices (zero beyond ``l*``)."""
    side = basis_size(M)
    n = cell.coords1.shape[0]
    b = np.zeros((side, side), dtype=complex)
    c = np.zeros((side, side), dtype=complex)
    b[:n, :n] = cell.step * (cell.coords1[..., 0] + 1j * cell.coords1[..., 1])
    c[:n, :n] = cell.step * (cell.coords2[..., 0] + 1j * cell.coords2[..., 1])
    return b, c


@dataclass(frozen=True)
class NetCheck:
    x_s_distance: float  # ||Gamma - (b + c)||_{X_s}
    weighted_split: float  # 4 sqrt2 sup (1+l)^{d/2-s} (|b - M1| + |c - M2|)
    delta: float
    overflow: int

    @property
    def within(self) -> bool:
        return self.x_s_distance <= self.delta and self.weighted_split <= self.delta


def check_net_property(g, spec: NetSpec) -> NetCheck:
    cell = quantize_gamma(g, spec)
    b, c = reconstruct(cell, g.M)
    dist = x_s_norm(HarmonicMatrix(g.M, g.entries.entries - (b + c)), spec.s)
    ell = g.entries.max_degree_grid()
    w = (1.0 + ell) ** (spec.d / 2.0 - spec.s)
    split = 4.0 * SQRT2 * float(np.max(w * (np.abs(b - g.M1.entries) + np.abs(c - g.M2.entries))))
    return NetCheck(dist, split, spec.delta, len(cell.overflow))


# ---------------------------------------------------------------------------
# theta <-> delta


def _high_rhs(delta, kappa2, phi):
    return (math.log1p(phi / delta) + 2.0 * (1.0 + kappa2) * phi / delta) / (1.0 + kappa2)


def _low_rhs(delta, kappa2):
    return math.log1p(1.0 / delta) + 2.0 * kappa2 / delta


@dataclass(frozen=True)
class ThetaDelta:
    delta: float
    residual: float  # relative residual of the defining equation
    envelope: float  # case-1/case-2 upper bound for delta

    @property
    def below_envelope(self) -> bool:
        return self.delta <= self.envelope


def theta_delta_solve(theta: float, kappa2: float, regime: str, phi: float | None = None, alpha: float = 1.0) -> ThetaDelta:
    """Unique ``delta`` with ``theta^{-1/(2 alpha)} = RHS(delta)``.

    high: ``RHS = [log(1 + Phi/delta) + 2(1+kappa^2) Phi/delta] / (1+kappa^2)`` on ``(0, Phi)``;
    low:  ``RHS = log(1 + 1/delta) + 2 kappa^2 / delta`` on ``(0, 1)``.
    Both are strictly decreasing, so bisection (in ``log delta``) is safe.
    """
    if not 0.0 < theta < 1.0:
        raise ParameterError("theta must lie in (0, 1)")
    target = theta ** (-1.0 / (2.0 * alpha))
    if regime == "high":
        if phi is None:
            raise ParameterError("Phi required at high frequency")
        f = lambda dl: _high_rhs(dl, kappa2, phi)  # noqa: E731
        upper = phi
        if not theta < (2.0 + math.log(2.0)) ** (-2.0 * alpha):
            raise ParameterError("theta outside (0, (2 + log 2)^{-2 alpha})")
    elif regime == "low":
        f = lambda dl: _low_rhs(dl, kappa2)  # noqa: E731
        upper = 1.0
        if not theta < (0.5 * KAPPA1 + math.log(2.0)) ** (-2.0 * alpha) or kappa2 > 0.25 * KAPPA1:
            raise ParameterError("theta or kappa^2 outside the low-frequency window")
    else:
        raise ParameterError(f"unknown regime {regime!r}")
    if f(upper) >= target:
        raise ParameterError("no root: the right-hand side never reaches theta^{-1/(2 alpha)}")
    lo = math.log(upper) - 1.0
    while f(math.exp(lo)) < target:
        lo -= 1.0
    hi = math.log(upper)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if f(math.exp(mid)) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * max(1.0, abs(lo)):
            break
    delta = math.exp(0.5 * (lo + hi))
    residual = abs(f(delta) - target) / target
    t = theta ** (1.0 / (2.0 * alpha))
    if regime == "high":
        env = phi * (math.exp(-(1.0 + kappa2) * target / 3.0) + 3.0 * t)
    else:
        env = 2.0 * math.exp(-target / 3.0) + 3.0 * kappa2 * t
    return ThetaDelta(delta, residual, env)


# ---------------------------------------------------------------------------
# collisions


@dataclass
class PigeonholeReport:
    n_members: int
    log_Z: float
    log_Y: float
    collisions: list = field(default_factory=list)  # (a, b, op_norm, bound)
    min_pair: tuple | None = None  # (a, b, x_s distance, op norm)
    cell_hashes: list = field(default_factory=list)

    @property
    def must_collide(self) -> bool:
        return self.log_Z > self.log_Y

    @property
    def collision_bound_holds(self) -> bool:
        return all(op <= bound for _, _, op, bound in self.collisions)

    def to_dict(self) -> dict:
        return {
            "n_members": self.n_members,
            "log_Z": self.log_Z,
            "log_Y": self.log_Y,
            "must_collide": self.must_collide,
            "collisions": [list(c) for c in self.collisions],
            "min_pair": list(self.min_pair) if self.min_pair else None,
            "cell_hashes": [f"{h:016x}" for h in self.cell_hashes],
        }


def pigeonhole_search(family, spec: NetSpec, gammas: Sequence) -> PigeonholeReport:
    """Hash every member's net cell, report colliding pairs and the exhaustive
    minimum-``X_s``-distance pair.

    Colliding members ``a, b`` share a net point ``y`` with ``||Gamma_a - y||,
    ||Gamma_b - y|| <= delta`` in ``X_s``, hence
    ``||Lambda_a - Lambda_b||_{s -> -s} <= 4 sqrt2 * 2 delta = 8 sqrt2 delta``,
    which is checked on the computed matrices.
    """
    n = len(gammas)
    cells = [quantize_gamma(g, spec) for g in gammas]
    buckets: dict[int, list[int]] = {}
    for i, c in enumerate(cells):
        buckets.setdefault(c.hash64, []).append(i)
    bound = 8.0 * SQRT2 * spec.delta
    collisions = []
    if n:
        dw = (1.0 + degrees(gammas[0].M)) ** (-spec.s)
        weighted = np.stack([dw[:, None] * g.array * dw[None, :] for g in gammas])
    for members in buckets.values():
        for ai in range(len(members) - 1):
            a = members[ai]
            partners = [b for b in members[ai + 1 :] if cells[a] == cells[b]]
            if not partners:
                continue
            # batched spectral norms of D (Gamma_a - Gamma_b) D
            ops = np.linalg.svd(weighted[partners] - weighted[a], compute_uv=False)[:, 0]
            collisions.extend((a, b, float(op), bound) for b, op in zip(partners, ops))
    min_pair = None
    if n >= 2:
        M = gammas[0].M
        w = (1.0 + np.maximum.outer(degrees(M), degrees(M))) ** (spec.d / 2.0 - spec.s)
        stack = np.stack([g.array for g in gammas])
        best = None
        for a in range(n - 1):
            dists = np.max(np.abs(stack[a + 1 :] - stack[a]) * w, axis=(1, 2))
            k = int(np.argmin(dists))
            if best is None or dists[k] < best[2]:
                best = (a, a + 1 + k, float(dists[k]))
        diff = HarmonicMatrix(M, gammas[best[0]].array - gammas[best[1]].array)
        min_pair = best + (op_norm_s_to_minus_s(diff, spec.s),)
    log_Z = math.log(len(family)) if family is not None else math.log(max(n, 1))
    return PigeonholeReport(n, log_Z, spec.log_cardinality, collisions, min_pair, [c.hash64 for c in cells])
