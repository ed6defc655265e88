"""Potentials on the unit disk: smooth bumps, radial profiles, constants.

Every potential is ``q(x) + i * imaginary_shift``, where the real part ``q``
is supported in the closed disk of radius ``r0`` (except for the constant
kind).  The discrete families used for instability experiments are sums of
disjoint bumps with heights in ``{0, theta}``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .bessel import KAPPA1

LOG2 = math.log(2.0)

# Packing constant in the cardinality lower bound.  It is not computable; 0.25
# is the largest quarter-step value for which the default six-bump family meets
# the bound at every admissible theta (beta / theta is theta-independent).
DEFAULT_MU = 0.25


class GeometryError(ValueError):
    pass


class ParameterError(ValueError):
    pass


class DomainError(ValueError):
    pass


def mollifier(t):
    """Bump profile ``eta(t) = exp(1 - 1/(1 - t^2))`` on ``|t| < 1``, zero outside."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out[()]


def mollifier_holder_seminorm(alpha: float, samples: int = 20001) -> float:
    """Hölder seminorm of ``t -> eta(|t|)`` on the line, by dense sampling.

    Only ``0 < alpha <= 1`` is meaningful for a zeroth-order quotient.
    """
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"Hölder exponent must lie in (0, 1], got {alpha}")
    t = np.linspace(0.0, 1.0, samples)
    f = mollifier(t)
    if alpha == 1.0:
        # Lipschitz constant = max |eta'|, refined from the sampled difference quotient
        return float(np.max(np.abs(np.diff(f)) / np.diff(t)))
    best = 0.0
    # separations from one grid step up to the full support
    for k in np.unique(np.geomspace(1, samples - 1, 400).astype(int)):
        q = np.abs(f[k:] - f[:-k]) / (t[k] - t[0]) ** alpha
        best = max(best, float(q.max()))
    # pairs on opposite sides of the origin: |eta(s) - eta(t)| / (s + t)^alpha
    s = t[::20]
    diff = np.abs(mollifier(s)[:, None] - mollifier(s)[None, :])
    dist = s[:, None] + s[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(dist > 0, diff / dist**alpha, 0.0)
    return max(best, float(q.max()))


def holder_constant(alpha: float) -> float:
    """``c_eta`` such that a bump sum with heights <= theta and radius rho has
    ``||f||_{C^alpha} <= theta * c_eta / rho^alpha`` (for rho <= 1).

    Disjoint bumps cost an extra factor ``2^{1-alpha}`` on the seminorm.
    """
    return 1.0 + 2.0 ** (1.0 - alpha) * mollifier_holder_seminorm(alpha)


@dataclass(frozen=True)
class BumpSpec:
    center: tuple[float, float]
    radius: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise GeometryError(f"bump radius must be positive, got {self.radius}")
        if not math.isfinite(self.height):
            raise ParameterError("bump height must be finite")
        if math.hypot(*self.center) >= 1.0:
            raise GeometryError("bump center must lie in the open unit disk")

    @property
    def outer_radius(self) -> float:
        return math.hypot(*self.center) + self.radius

    def __call__(self, x, y):
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        return self.height * mollifier(np.hypot(dx, dy) / self.radius)


@dataclass(frozen=True)
class Potential:
    """A complex potential on the unit disk.

    ``kind`` is one of ``"bumps"``, ``"radial"`` or ``"constant"``.  Radial
    profiles are sampled on ``radial_nodes`` (in ``[0, r0]``) and interpolated
    with a cubic spline; the profile is zero for ``r > r0``.
    """

    kind: str
    r0: float = 0.5
    bumps: tuple[BumpSpec, ...] = ()
    radial_nodes: tuple[float, ...] = ()
    radial_values: tuple[complex, ...] = ()
    constant: complex = 0.0
    imaginary_shift: float = 0.0
    R: float = 1.0
    alpha: float = 1.0
    _spline: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("bumps", "radial", "constant"):
            raise ParameterError(f"unknown potential kind {self.kind!r}")
        if not 0.0 < self.r0 < 1.0:
            raise ParameterError(f"support radius must lie in (0, 1), got {self.r0}")
        object.__setattr__(self, "bumps", tuple(self.bumps))
        for b in self.bumps:
            if b.outer_radius > self.r0 + 1e-12:
                raise GeometryError(f"bump at {b.center} with radius {b.radius} leaves B_r0")
        if self.kind == "radial":
            nodes = np.asarray(self.radial_nodes, dtype=float)
            vals = np.asarray(self.radial_values, dtype=complex)
            if nodes.ndim != 1 or nodes.size < 4 or nodes.shape != vals.shape:
                raise ParameterError("radial profile needs >= 4 matching nodes and values")
            if nodes[0] != 0.0 or nodes[-1] > self.r0 + 1e-12 or np.any(np.diff(nodes) <= 0):
                raise ParameterError("radial nodes must increase from 0 to at most r0")
            from scipy.interpolate import CubicSpline

            object.__setattr__(self, "_spline", CubicSpline(nodes, vals, bc_type="natural"))

    # construction helpers -------------------------------------------------

    @classmethod
    def from_bumps(cls, bumps: Sequence[BumpSpec], r0: float = 0.5, **kw) -> "Potential":
        return cls("bumps", r0=r0, bumps=tuple(bumps), **kw)

    @classmethod
    def from_profile(cls, func: Callable, r0: float = 0.5, n: int = 401, **kw) -> "Potential":
        nodes = np.linspace(0.0, r0, n)
        vals = np.asarray(func(nodes), dtype=complex)
        return cls("radial", r0=r0, radial_nodes=tuple(nodes), radial_values=tuple(vals), **kw)

    @classmethod
    def zero(cls, r0: float = 0.5, imaginary_shift: float = 0.0) -> "Potential":
        return cls("bumps", r0=r0, imaginary_shift=imaginary_shift)

    def with_shift(self, shift: float) -> "Potential":
        d = self.to_dict()
        d["imaginary_shift"] = shift
        return Potential.from_dict(d)

    # evaluation -----------------------------------------------------------

    @property
    def is_radial(self) -> bool:
        if self.kind in ("radial", "constant"):
            return True
        return all(b.center == (0.0, 0.0) for b in self.bumps)

    def real_part(self, x, y):
        """Real-valued part (the perturbation ``q``) without the imaginary shift."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "constant":
            return np.full(np.broadcast(x, y).shape, self.constant, dtype=complex)[()]
        r = np.hypot(x, y)
        if self.kind == "radial":
            out = np.zeros(r.shape, dtype=complex)
            inside = r <= self.r0
            out[inside] = self._spline(r[inside])
            return out[()]
        out = np.zeros(np.broadcast(x, y).shape, dtype=float)
        for b in self.bumps:
            out = out + b(x, y)
        return out[()]

    def radial_profile(self) -> Callable:
        """Callable ``r -> q(r)`` (without shift) for radially symmetric potentials."""
        if not self.is_radial:
            raise ParameterError("potential is not radially symmetric")

        def profile(r):
            r = np.asarray(r, dtype=float)
            return self.real_part(r, np.zeros_like(r))

        return profile

    def sup_norm(self) -> float:
        """``||Re q||_inf`` (exact for bump sums, sampled for radial profiles)."""
        if self.kind == "constant":
            return abs(self.constant)
        if self.kind == "radial":
            r = np.linspace(0.0, self.r0, 4001)
            return float(np.max(np.abs(self._spline(r))))
        if not self.bumps:
            return 0.0
        # bumps are disjoint, so the sup is attained at a center
        return max(abs(b.height) for b in self.bumps)

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    # serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "r0": self.r0,
            "R": self.R,
            "alpha": self.alpha,
            "imaginary_shift": self.imaginary_shift,
        }
        if self.kind == "bumps":
            d["bumps"] = [
                {"center": list(b.center), "radius": b.radius, "height": b.height} for b in self.bumps
            ]
        elif self.kind == "radial":
            d["radial_nodes"] = list(self.radial_nodes)
            d["radial_values"] = [[v.real, v.imag] for v in np.asarray(self.radial_values, dtype=complex)]
        else:
            c = complex(self.constant)
            d["constant"] = [c.real, c.imag]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Potential":
        kw = dict(
            r0=d.get("r0", 0.5),
            R=d.get("R", 1.0),
            alpha=d.get("alpha", 1.0),
            imaginary_shift=d.get("imaginary_shift", 0.0),
        )
        kind = d["kind"]
        if kind == "bumps":
            bumps = tuple(BumpSpec(tuple(b["center"]), b["radius"], b["height"]) for b in d.get("bumps", []))
            return cls("bumps", bumps=bumps, **kw)
        if kind == "radial":
            vals = tuple(complex(re, im) for re, im in d["radial_values"])
            return cls("radial", radial_nodes=tuple(d["radial_nodes"]), radial_values=vals, **kw)
        if kind == "constant":
            c = d["constant"]
            c = complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
            return cls("constant", constant=c, **kw)
        raise ParameterError(f"unknown potential kind {kind!r}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Potential":
        return cls.from_dict(json.loads(text))


def eval_potential(q: Potential, point) -> complex:
    """Value of ``q + i * shift`` at a point ``(x, y)`` of the closed unit disk."""
    x, y = float(point[0]), float(point[1])
    if math.hypot(x, y) > 1.0 + 1e-12:
        raise DomainError(f"point {point} lies outside the closed unit disk")
    return complex(q.real_part(x, y)) + 1j * q.imaginary_shift


# ---------------------------------------------------------------------------
# discrete families


def hex_centers(r0: float, rho: float, n: int) -> list[tuple[float, float]] | None:
    """``n`` hexagonal-lattice points (spacing ``2 rho``) nearest the origin that
    lie in ``B_{r0 - rho}``, or ``None`` if fewer than ``n`` fit."""
    reach = r0 - rho
    if reach < 0:
        return None
    a = 2.0 * rho
    kmax = int(math.ceil(reach / a)) + 2
    pts = []
    for i, j in product(range(-2 * kmax, 2 * kmax + 1), repeat=2):
        x = a * (i + 0.5 * j)
        y = a * (math.sqrt(3.0) / 2.0) * j
        r = math.hypot(x, y)
        if r <= reach + 1e-12:
            pts.append((round(r, 12), round(math.atan2(y, x) % (2 * math.pi), 12), x, y))
    if len(pts) < n:
        return None
    pts.sort()
    return [(p[2], p[3]) for p in pts[:n]]


def bump_layout(r0: float, n_bumps: int, fill: float = 0.98) -> tuple[float, list[tuple[float, float]]]:
    """Largest bump radius whose hexagonal packing of ``n_bumps`` disjoint bumps
    fits in ``B_{r0}``; the returned radius is shrunk by ``fill`` so that
    neighbouring supports do not touch."""
    if n_bumps < 1:
        raise GeometryError("need at least one bump")
    lo, hi = 0.0, r0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if hex_centers(r0, mid, n_bumps) is not None:
            lo = mid
        else:
            hi = mid
    if lo <= 0.0:
        raise GeometryError(f"{n_bumps} bumps do not fit in B_{r0}")
    centers = hex_centers(r0, lo, n_bumps)
    return lo * fill, centers


@dataclass(frozen=True)
class DiscreteFamily:
    """The ``2^n`` subset family of bump potentials with heights in ``{0, theta}``."""

    theta: float
    alpha: float
    r0: float
    radius: float
    centers: tuple[tuple[float, float], ...]
    beta: float
    R: float
    mu: float = DEFAULT_MU

    @property
    def n_bumps(self) -> int:
        return len(self.centers)

    def __len__(self) -> int:
        return 2**self.n_bumps

    def subset(self, index: int) -> tuple[int, ...]:
        """Bump indices switched on in member ``index`` (bit ``i`` <-> bump ``i``)."""
        return tuple(i for i in range(self.n_bumps) if (index >> i) & 1)

    def member(self, index: int, imaginary_shift: float = 0.0) -> Potential:
        if not 0 <= index < len(self):
            raise IndexError(index)
        bumps = tuple(BumpSpec(self.centers[i], self.radius, self.theta) for i in self.subset(index))
        return Potential.from_bumps(
            bumps, r0=self.r0, imaginary_shift=imaginary_shift, R=self.R, alpha=self.alpha
        )

    @property
    def members(self) -> list[Potential]:
        return [self.member(i) for i in range(len(self))]

    def unit_bump(self, i: int) -> Potential:
        """Bump ``i`` alone with unit height (used to assemble couplings linearly)."""
        return Potential.from_bumps((BumpSpec(self.centers[i], self.radius, 1.0),), r0=self.r0)

    def separation(self, a: int, b: int) -> float:
        """``max`` over bump centers of ``|q_a - q_b|`` (equals the L^inf distance)."""
        pa, pb = self.member(a), self.member(b)
        return max(
            (abs(complex(pa.real_part(*c)) - complex(pb.real_part(*c))) for c in self.centers), default=0.0
        )

    def log_cardinality_lower_bound(self, d: int = 2) -> float:
        """``2^{-(d+1)} (mu beta / theta)^{d / alpha}``."""
        return 2.0 ** (-(d + 1)) * (self.mu * self.beta / self.theta) ** (d / self.alpha)

    def cardinality_report(self, d: int = 2) -> dict:
        bound = self.log_cardinality_lower_bound(d)
        actual = self.n_bumps * LOG2
        return {"log_Z": actual, "log_Z_lower_bound": bound, "satisfied": actual >= bound}


def high_frequency_window(alpha: float, R: float) -> float:
    """Upper end of the admissible theta interval at high frequency."""
    return min((2.0 + LOG2) ** (-2.0 * alpha), R)


def low_frequency_window(alpha: float, kappa1: float = KAPPA1) -> float:
    """Upper end of the admissible theta interval when ``kappa^2 <= kappa_1 / 4``."""
    return min((0.5 * kappa1 + LOG2) ** (-2.0 * alpha), 0.25 * kappa1)


def build_discrete_family(
    theta: float,
    alpha: float,
    r0: float,
    n_bumps: int,
    *,
    R: float = 1.0,
    regime: str | None = "high",
    mu: float = DEFAULT_MU,
) -> DiscreteFamily:
    """θ-separated family of ``2^n_bumps`` nonnegative bump potentials in ``B_{r0}``.

    ``regime`` selects the admissible window (``"high"``, ``"low"``, ``"both"``
    or ``None`` for no check).  The implied Hölder budget is
    ``beta = theta * c_eta / rho^alpha``.
    """
    if not theta > 0:
        raise ParameterError("theta must be positive")
    windows = {
        "high": high_frequency_window(alpha, R),
        "low": low_frequency_window(alpha),
        "both": min(high_frequency_window(alpha, R), low_frequency_window(alpha)),
        None: math.inf,
    }
    if regime not in windows:
        raise ParameterError(f"unknown regime {regime!r}")
    upper = windows[regime]
    if regime is not None and not theta < upper:
        raise ParameterError(f"theta={theta} outside the admissible window (0, {upper:.6g})")
    rho, centers = bump_layout(r0, n_bumps)
    beta = theta * holder_constant(min(alpha, 1.0)) / rho**alpha
    return DiscreteFamily(theta, alpha, r0, rho, tuple(centers), beta, R, mu)


def estimate_holder_norm(q: Potential, alpha: float, grid: int = 121, max_sep: float | None = None) -> float:
    """Sampled lower bound ``max(sup|f|, sup |f(x)-f(y)| / |x-y|^alpha)`` of the
    C^alpha norm of ``Re q`` on a Cartesian grid over ``[-r0, r0]^2``.

    Pairs are restricted to separations ``<= max_sep`` (default: the smallest
    bump radius, or ``r0``).
    """
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"Hölder exponent must lie in (0, 1], got {alpha}")
    ext = q.r0 if q.kind != "constant" else 1.0 / math.sqrt(2.0)
    xs = np.linspace(-ext, ext, grid)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    F = np.real(np.asarray(q.real_part(X, Y)))
    sup = float(np.max(np.abs(F)))
    if max_sep is None:
        max_sep = min((b.radius for b in q.bumps), default=q.r0)
    kmax = max(1, int(max_sep / h))
    best = 0.0
    for di in range(0, kmax + 1):
        for dj in range(-kmax, kmax + 1):
            if di == 0 and dj <= 0:
                continue
            dist = h * math.hypot(di, dj)
            if dist > max_sep + 1e-12:
                continue
            a = F[di:, max(dj, 0) : grid + min(dj, 0)]
            b = F[: grid - di, max(-dj, 0) : grid - max(dj, 0)]
            best = max(best, float(np.max(np.abs(a - b))) / dist**alpha)
    return max(sup, best)


def analytic_holder_bound(family: DiscreteFamily) -> float:
    """Upper bound ``theta * c_eta / rho^alpha`` of any member's C^alpha norm."""
    return family.beta


@dataclass(frozen=True)
class Dichotomy:
    lower: float
    upper: float
    degenerate: bool


def dichotomy_thresholds(theta: float, alpha: float) -> Dichotomy:
    """Frequency thresholds separating exponential (``kappa^2 < lower``) from
    Hölder (``kappa^2 > upper``) instability.

    ``degenerate`` is set when ``theta^{-1/(2 alpha)} <= 3`` so the logarithmic
    branch is nonpositive.
    """
    if not 0.0 < theta < 1.0:
        raise ParameterError(f"theta must lie in (0, 1), got {theta}")
    t = theta ** (1.0 / (2.0 * alpha))
    log_branch = 3.0 * t * math.log(1.0 / (3.0 * t))
    exp_branch = (2.0 / 3.0) * t * math.exp(-1.0 / (3.0 * t))
    return Dichotomy(min(log_branch, exp_branch), max(log_branch, exp_branch), 1.0 / t <= 3.0)
