"""Forward solvers for ``(Delta + Q) u = 0`` in the unit disk with ``u = Y_mj`` on the circle.

Two independent routes:

* :func:`solve_radial_mode` -- separation of variables for radial ``Q``.  With
  ``u = r^m w`` the singular coefficient ``m^2 / r^2`` disappears and
  ``w'' + (2m+1)/r w' + Q w = 0``; we integrate in ``s = log r`` (where the
  equation is ``w_ss + 2m w_s + r^2 Q w = 0``, no longer stiff near ``r = 0``)
  with fixed-step RK4, starting from a four-term Frobenius series.

* :class:`DiskGalerkin` -- spectral Galerkin in complex Fourier modes ``mu``
  times Zernike-type radial polynomials
  ``(1 - r^2) r^|mu| P_k^{(2,|mu|)}(2 r^2 - 1)``, with the harmonic lifting
  ``|x|^m Y_mj(x/|x|)`` carrying the boundary datum.  Couplings from a
  non-radial potential are integrated on a polar grid (composite Gauss in
  ``r`` times the trapezoid rule in angle).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.special import eval_jacobi, roots_legendre

from .harmonics import HarmonicIndex, fourier_synthesis, harmonic_indices, position
from .potentials import Potential


class ResonanceError(RuntimeError):
    """``kappa^2`` is (numerically) a Dirichlet eigenvalue of ``-(Delta + q)``."""


class ResolutionError(RuntimeError):
    """The quadrature grid cannot resolve the potential."""


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    M_trunc: int = 32
    N_rad: int = 24
    ode_steps: int = 4096
    r_start: float = 1e-4
    n_phi: int | None = None  # angular quadrature points; None = chosen from the potential
    panel_order: int = 16
    trace_tol: float = 1e-10
    residual_tol: float = 1e-8
    resonance_ratio: float = 1e-8
    cond_max: float = 1e12
    iter_tol: float = 1e-14
    max_iter: int = 80

    def __post_init__(self):
        for name in ("M_trunc", "N_rad", "ode_steps", "panel_order", "max_iter"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.r_start < 1:
            raise ValueError("r_start must lie in (0, 1)")
        if self.trace_tol < 1e-15:
            raise ValueError("trace_tol below machine-epsilon scale")

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def total_potential(q: Potential | Callable, shift: float | None = None) -> Callable:
    """Radial callable ``r -> q(r) + i * shift`` for radial potentials."""
    if isinstance(q, Potential):
        prof = q.radial_profile()
        s = q.imaginary_shift if shift is None else shift
        return lambda r: np.asarray(prof(r), dtype=complex) + 1j * s
    return q


# ---------------------------------------------------------------------------
# radial ODE route


@dataclass(frozen=True)
class RadialModeSolution:
    m: int
    grid: np.ndarray
    values: np.ndarray
    boundary_derivative: complex
    kappa2: float


def solve_radial_modes(
    q_total: Callable | Potential | complex,
    kappa2: float,
    ms: Sequence[int],
    cfg: SolverConfig = SolverConfig(),
    keep_values: bool = True,
) -> list[RadialModeSolution]:
    """Vectorised :func:`solve_radial_mode` over several degrees."""
    ms = np.asarray(list(ms), dtype=int)
    if isinstance(q_total, Potential):
        q_total = total_potential(q_total)
    if callable(q_total):
        qfun = q_total
    else:
        const = complex(q_total)
        qfun = lambda r: np.full(np.shape(r), const, dtype=complex)  # noqa: E731

    n = cfg.ode_steps
    s0 = math.log(cfg.r_start)
    h = -s0 / n
    s_nodes = s0 + h * np.arange(n + 1)
    r_nodes = np.exp(s_nodes)
    r_mid = np.exp(s_nodes[:-1] + 0.5 * h)
    Q_nodes = np.asarray(qfun(r_nodes), dtype=complex) + kappa2
    Q_mid = np.asarray(qfun(r_mid), dtype=complex) + kappa2
    g_nodes = r_nodes**2 * Q_nodes
    g_mid = r_mid**2 * Q_mid

    # Frobenius start: w = sum_k a_{2k} r^{2k}, a_{2k} = -Q(0) a_{2k-2} / (2k (2k + 2m))
    Q0 = complex(np.asarray(qfun(np.array([0.0])), dtype=complex)[0]) + kappa2
    r = cfg.r_start
    w = np.ones(ms.shape, dtype=complex)
    dw = np.zeros(ms.shape, dtype=complex)  # r dw/dr
    a = np.ones(ms.shape, dtype=complex)
    for k in range(1, 4):
        a = -Q0 * a / (2 * k * (2 * k + 2 * ms))
        w += a * r ** (2 * k)
        dw += 2 * k * a * r ** (2 * k)

    twom = 2.0 * ms
    W = np.empty((n + 1, ms.size), dtype=complex) if keep_values else None
    if keep_values:
        W[0] = w

    def rhs(w_, v_, g):
        return v_, -twom * v_ - g * w_

    for i in range(n):
        gm = g_mid[i]
        k1w, k1v = dw, -twom * dw - g_nodes[i] * w
        k2w, k2v = rhs(w + 0.5 * h * k1w, dw + 0.5 * h * k1v, gm)
        k3w, k3v = rhs(w + 0.5 * h * k2w, dw + 0.5 * h * k2v, gm)
        k4w, k4v = rhs(w + h * k3w, dw + h * k3v, g_nodes[i + 1])
        w = w + (h / 6.0) * (k1w + 2 * k2w + 2 * k3w + k4w)
        dw = dw + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if keep_values:
            W[i + 1] = w

    out = []
    for idx, m in enumerate(ms):
        scale = np.max(np.abs(W[:, idx])) if keep_values else max(1.0, abs(w[idx]))
        if abs(w[idx]) < cfg.resonance_ratio * scale:
            raise ResonanceError(f"mode m={m}: |u_m(1)| ~ {abs(w[idx]):.3e}, kappa^2={kappa2} is near an eigenvalue")
        dtn = m + dw[idx] / w[idx]
        vals = (r_nodes**m * W[:, idx] / w[idx]) if keep_values else np.empty(0)
        out.append(RadialModeSolution(int(m), r_nodes, vals, complex(dtn), kappa2))
    return out


def solve_radial_mode(
    q_total: Callable | Potential | complex, kappa2: float, m: int, cfg: SolverConfig = SolverConfig()
) -> RadialModeSolution:
    """Regular solution of the mode-``m`` radial equation normalised to ``u_m(1) = 1``."""
    return solve_radial_modes(q_total, kappa2, [m], cfg)[0]


# ---------------------------------------------------------------------------
# Galerkin route


def _gauss_panels(a: float, b: float, width: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    n_panels = max(1, int(math.ceil((b - a) / width)))
    x, w = roots_legendre(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class RadialBasis:
    """Normalised radial functions ``R_{mu,k}(r) = c (1 - r^2) r^a P_k^{(2,a)}(2 r^2 - 1)``, ``a = |mu|``.

    Normalised so that the 2-D functions ``R_{mu,k}(r) e^{i mu phi}`` are
    orthonormal in ``L^2(B_1)``.
    """

    def __init__(self, mode_max: int, n_rad: int):
        self.mode_max = mode_max
        self.n_rad = n_rad
        self.orders = np.arange(n_rad)
        nq = mode_max // 2 + n_rad + 6
        t, wt = roots_legendre(nq)
        self._t = 0.5 * (t + 1.0)
        self._wt = 0.5 * wt
        self.norms = np.empty((mode_max + 1, n_rad))
        self.stiff = np.empty((mode_max + 1, n_rad, n_rad))
        self.lift = np.empty((mode_max + 1, n_rad))
        for a in range(mode_max + 1):
            g, dg = self._g(a, self._t)
            tw = self._wt * self._t**a
            # 2 pi * (1/2) int t^a g_k g_l dt
            mass = math.pi * np.einsum("q,qk,ql->kl", tw, g, g)
            norm = np.sqrt(np.diag(mass))
            self.norms[a] = norm
            gn, dgn = g / norm, dg / norm
            A = a * gn + 2.0 * self._t[:, None] * dgn
            if a == 0:
                K = math.pi * np.einsum("q,qk,ql->kl", self._wt, A, A / np.maximum(self._t, 1e-300)[:, None])
            else:
                tw1 = self._wt * self._t ** (a - 1)
                K = math.pi * (np.einsum("q,qk,ql->kl", tw1, A, A) + a * a * np.einsum("q,qk,ql->kl", tw1, gn, gn))
            self.stiff[a] = 0.5 * (K + K.T)
            # 2 pi int R r^a r dr = pi int t^a g dt
            self.lift[a] = math.pi * (tw @ gn)
        # R'(1) = -2 P_k^{(2,a)}(1) / norm,  P_k^{(2,a)}(1) = binom(k+2, 2)
        pk1 = (self.orders + 1) * (self.orders + 2) / 2.0
        self.dr1 = -2.0 * pk1[None, :] / self.norms

    def _g(self, a: int, t: np.ndarray):
        """``g_k(t) = (1 - t) P_k(2t - 1)`` and ``dg_k/dt`` at nodes ``t``."""
        x = 2.0 * t - 1.0
        k = self.orders
        P = eval_jacobi(k[None, :], 2, a, x[:, None])
        dP = np.zeros_like(P)
        if self.n_rad > 1:
            dP[:, 1:] = (k[1:] + a + 3)[None, :] / 2.0 * eval_jacobi(k[1:][None, :] - 1, 3, a + 1, x[:, None]) * 2.0
        g = (1.0 - t)[:, None] * P
        dg = -P + (1.0 - t)[:, None] * dP
        return g, dg

    def values(self, a: int, r: np.ndarray) -> np.ndarray:
        """``R_{a,k}(r)`` for all ``k``; shape ``(len(r), n_rad)``."""
        r = np.asarray(r, dtype=float)
        g, _ = self._g(a, r * r)
        return (r**a)[:, None] * g / self.norms[a][None, :]


@dataclass
class PolarQuadrature:
    """Polar grid covering the support of a potential's real part."""

    r: np.ndarray  # radial nodes
    w: np.ndarray  # weights for  int f(r) r dr
    n_phi: int

    @cached_property
    def phi(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.n_phi) / self.n_phi

    @classmethod
    def for_potential(cls, q: Potential, mode_max: int, cfg: SolverConfig) -> "PolarQuadrature":
        if q.kind == "bumps" and q.bumps:
            rho_min = min(b.radius for b in q.bumps)
            r_lo = max(0.0, min(math.hypot(*b.center) - b.radius for b in q.bumps))
            r_hi = max(b.outer_radius for b in q.bumps)
        elif q.kind == "radial":
            rho_min = q.r0 / 4.0
            r_lo, r_hi = 0.0, q.r0
        else:
            rho_min, r_lo, r_hi = q.r0, 0.0, q.r0
        width = min(0.5 * rho_min, 0.25)
        r, w = _gauss_panels(r_lo, r_hi, width, cfg.panel_order)
        if cfg.n_phi is None:
            need = max(4 * (2 * mode_max + 1), int(24 * 2 * math.pi * r_hi / rho_min))
            n_phi = 1 << int(math.ceil(math.log2(need)))
        else:
            n_phi = cfg.n_phi
        spacing = max(2 * math.pi * r_hi / n_phi, float(np.max(np.diff(r))) if r.size > 1 else 0.0)
        if q.kind == "bumps" and q.bumps and rho_min < 2 * spacing:
            raise ResolutionError(f"bump radius {rho_min:.3g} below two quadrature spacings ({spacing:.3g})")
        return cls(r, w * r, n_phi)

    def grid_values(self, q: Potential) -> np.ndarray:
        """``Re q`` on the grid, shape ``(n_r, n_phi)``."""
        R, P = np.meshgrid(self.r, self.phi, indexing="ij")
        return np.asarray(q.real_part(R * np.cos(P), R * np.sin(P)))


@dataclass
class GalerkinSolution:
    datum: tuple[HarmonicIndex, ...]
    coefficients: np.ndarray  # (n_data, 2L+1, N)
    lifting: np.ndarray  # (n_data, 2L+1): Fourier coefficients of Y_mj
    residual: float
    dtn_columns: np.ndarray  # (basis_size(M_data), n_data)
    disk: "DiskGalerkin" = field(repr=False)

    def mode_profiles(self, r: np.ndarray) -> np.ndarray:
        """Radial profiles of each Fourier mode, shape ``(n_data, 2L+1, len(r))``."""
        r = np.asarray(r, dtype=float)
        L = self.disk.L
        out = np.empty((len(self.datum), 2 * L + 1, r.size), dtype=complex)
        for mu in range(-L, L + 1):
            a = abs(mu)
            Rv = self.disk.basis.values(a, r)
            out[:, mu + L, :] = self.coefficients[:, mu + L, :] @ Rv.T + self.lifting[:, mu + L, None] * r[None, :] ** a
        return out

    def evaluate(self, r, phi) -> np.ndarray:
        """``u`` at polar points; returns shape ``(n_data,) + broadcast(r, phi).shape``."""
        r, phi = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(phi, dtype=float))
        flat_r, flat_p = r.ravel(), phi.ravel()
        prof = self.mode_profiles(flat_r)
        L = self.disk.L
        e = np.exp(1j * np.outer(np.arange(-L, L + 1), flat_p))
        vals = np.einsum("dmp,mp->dp", prof, e)
        return vals.reshape((len(self.datum),) + r.shape)

    def on_grid(self, quad: PolarQuadrature) -> np.ndarray:
        """``u`` on a polar quadrature grid, shape ``(n_data, n_r, n_phi)``."""
        prof = self.mode_profiles(quad.r)
        return self.disk.synthesize(prof, quad.n_phi)

    def l2_norm(self) -> np.ndarray:
        """``||u||_{L^2(B_1)}`` for each datum (exact polynomial quadrature)."""
        t, wt = roots_legendre(self.disk.L // 2 + self.disk.N + 8)
        rr = np.sqrt(0.5 * (t + 1.0))
        w = 0.5 * wt * 0.5  # r dr = dt / 2
        prof = self.mode_profiles(rr)
        return np.sqrt(2 * math.pi * np.einsum("q,dmq->d", w, np.abs(prof) ** 2))


class DiskGalerkin:
    """Spectral Galerkin discretisation of ``-Delta - Q`` on the unit disk.

    Unknowns are ordered ``(mu + L) * N + k`` for Fourier mode ``|mu| <= L``
    and radial order ``k < N``.
    """

    def __init__(self, mode_max: int, n_rad: int):
        self.L = mode_max
        self.N = n_rad
        self.basis = RadialBasis(mode_max, n_rad)
        self.abs_modes = np.abs(np.arange(-mode_max, mode_max + 1))

    @property
    def size(self) -> int:
        return (2 * self.L + 1) * self.N

    # -- block-diagonal (constant-coefficient) part --------------------------

    def block_operator(self, Q0: complex) -> np.ndarray:
        """Per-mode blocks ``K_mu - Q0 I``, shape ``(2L+1, N, N)``."""
        K = self.basis.stiff[self.abs_modes]
        return K.astype(complex) - Q0 * np.eye(self.N)[None, :, :]

    # -- potential couplings ----------------------------------------------------

    def radial_tables(self, quad: PolarQuadrature) -> np.ndarray:
        """``R_{|mu|,k}(r_i)`` on the quadrature nodes, shape ``(2L+1, n_r, N)``."""
        tab = np.empty((self.L + 1, quad.r.size, self.N))
        for a in range(self.L + 1):
            tab[a] = self.basis.values(a, quad.r)
        return tab[self.abs_modes]

    def potential_modes(self, qgrid: np.ndarray, quad: PolarQuadrature) -> np.ndarray:
        """``qhat_nu(r_i) = (1/2pi) int q e^{-i nu phi}`` for ``|nu| <= 2L``, shape ``(4L+1, n_r)``."""
        if quad.n_phi < 4 * self.L + 1:
            raise ResolutionError("angular grid too coarse for the mode coupling")
        F = np.fft.fft(qgrid, axis=1) / quad.n_phi
        nus = np.arange(-2 * self.L, 2 * self.L + 1)
        return F[:, nus % quad.n_phi].T

    def coupling_matrix(self, qhat: np.ndarray, quad: PolarQuadrature, tables: np.ndarray | None = None) -> np.ndarray:
        """Dense ``C[(mu',k'), (mu,k)] = int q R_{mu k} e^{i mu phi} conj(R_{mu' k'} e^{i mu' phi})``."""
        L, N = self.L, self.N
        tab = self.radial_tables(quad) if tables is None else tables
        C = np.empty((2 * L + 1, N, 2 * L + 1, N), dtype=complex)
        mus = np.arange(-L, L + 1)
        for ip, mup in enumerate(mus):
            # weights W[mu, i] = 2 pi w_i qhat_{mu' - mu}(r_i)
            W = 2 * math.pi * quad.w[None, :] * qhat[(mup - mus) + 2 * L, :]
            left = tab[ip].T  # (N, n_r)
            C[ip] = np.einsum("ki,mi,mil->kml", left, W, tab, optimize=True)
        return C.reshape(self.size, self.size)

    def lifting_rhs_q(self, qhat: np.ndarray, quad: PolarQuadrature, lifting: np.ndarray, tables: np.ndarray) -> np.ndarray:
        """``int q Ytilde conj(psi)`` for each lifting, shape ``(n_data, size)``."""
        L = self.L
        mus = np.arange(-L, L + 1)
        rpow = quad.r[None, :] ** self.abs_modes[:, None]  # (2L+1, n_r)
        # lifted field modes on nodes: (n_data, 2L+1, n_r)
        lf = lifting[:, :, None] * rpow[None]
        out = np.zeros((lifting.shape[0], 2 * L + 1, self.N), dtype=complex)
        for ip, mup in enumerate(mus):
            W = 2 * math.pi * quad.w[None, :] * qhat[(mup - mus) + 2 * L, :]  # (mu, i)
            g = np.einsum("dmi,mi->di", lf, W)
            out[:, ip, :] = g @ tables[ip]
        return out.reshape(lifting.shape[0], -1)

    def lifting_rhs_const(self, Q0: complex, lifting: np.ndarray) -> np.ndarray:
        lift = self.basis.lift[self.abs_modes]  # (2L+1, N)
        return (Q0 * lifting[:, :, None] * lift[None]).reshape(lifting.shape[0], -1)

    def synthesize(self, prof: np.ndarray, n_phi: int) -> np.ndarray:
        """Mode profiles ``(..., 2L+1, n_r)`` to grid values ``(..., n_r, n_phi)``."""
        L = self.L
        spec = np.zeros(prof.shape[:-2] + (prof.shape[-1], n_phi), dtype=complex)
        idx = np.arange(-L, L + 1) % n_phi
        spec[..., idx] = np.swapaxes(prof, -1, -2)
        return np.fft.ifft(spec, axis=-1) * n_phi

    def analyze(self, grid: np.ndarray, n_phi: int) -> np.ndarray:
        """Grid values ``(..., n_r, n_phi)`` to Fourier modes ``(..., 2L+1, n_r)``."""
        L = self.L
        F = np.fft.fft(grid, axis=-1) / n_phi
        return np.swapaxes(F[..., np.arange(-L, L + 1) % n_phi], -1, -2)

    # -- boundary flux ---------------------------------------------------------

    def flux_modes(self, coeffs: np.ndarray, lifting: np.ndarray) -> np.ndarray:
        """Fourier modes of ``d_r u`` at ``r = 1``: ``|mu| * lift + sum_k c R'(1)``."""
        dr1 = self.basis.dr1[self.abs_modes]  # (2L+1, N)
        return self.abs_modes[None, :] * lifting + np.einsum("dmk,mk->dm", coeffs, dr1)


def _lifting_matrix(data: Sequence[HarmonicIndex], L: int) -> np.ndarray:
    M = max(ix.m for ix in data)
    T = fourier_synthesis(M, L)
    return np.stack([T[position(ix)] for ix in data])


def _project_flux(flux: np.ndarray, M_out: int, L: int) -> np.ndarray:
    """``<d_r u, Y_nk>`` for ``n <= M_out``; columns are the data."""
    T = fourier_synthesis(M_out, L)
    return 2 * math.pi * (np.conj(T) @ flux.T)


@dataclass
class GalerkinProblem:
    """Assembled (but not yet solved) Galerkin system for one potential and frequency."""

    disk: DiskGalerkin
    Q0: complex
    blocks: np.ndarray
    quad: PolarQuadrature | None
    qhat: np.ndarray | None
    tables: np.ndarray | None
    coupling: np.ndarray | None
    qgrid: np.ndarray | None = None

    def matrix(self) -> np.ndarray:
        A = sla.block_diag(*self.blocks)
        if self.coupling is not None:
            A = A - self.coupling
        return A

    def lift_moments(self, coeffs: np.ndarray, M_out: int) -> np.ndarray:
        """``int_{B_1} (interior part of u) conj(Ytilde_nk)``; shape ``(basis, n_data)``.

        The integrand is a polynomial in ``r^2`` times a trigonometric
        polynomial, integrated exactly by the basis' Gauss rule in ``t = r^2``.
        """
        disk = self.disk
        T = fourier_synthesis(M_out, disk.L)
        lift = disk.basis.lift[disk.abs_modes]
        return np.conj(T) @ np.einsum("dmk,mk->md", coeffs, lift)

    def volume_moments(self, coeffs: np.ndarray, lifting: np.ndarray, M_out: int) -> np.ndarray:
        """``int_{B_1} Q u conj(Ytilde_nk)`` for ``n <= M_out``; shape ``(basis, n_data)``."""
        disk = self.disk
        L = disk.L
        T = fourier_synthesis(M_out, L)
        a = disk.abs_modes
        lift = disk.basis.lift[a]
        const = 2 * math.pi * lifting / (2 * a + 2)[None, :] + np.einsum("dmk,mk->dm", coeffs, lift)
        out = self.Q0 * (np.conj(T) @ const.T)  # int u conj(Ytilde) = lifted part + interior part
        if self.coupling is not None:
            out = out + self.q_moments(coeffs, lifting, M_out)
        return out

    def q_moments(self, coeffs: np.ndarray, lifting: np.ndarray, M_out: int) -> np.ndarray:
        """``int q u conj(Ytilde_nk)`` by polar quadrature; shape ``(basis, n_data)``."""
        disk, quad = self.disk, self.quad
        prof = np.einsum("dmk,mik->dmi", coeffs, self.tables) + lifting[:, :, None] * (
            quad.r[None, None, :] ** disk.abs_modes[None, :, None]
        )
        grid = disk.synthesize(prof, quad.n_phi) * self.qgrid[None]
        modes = disk.analyze(grid, quad.n_phi)  # (d, 2L+1, n_r)
        weights = 2 * math.pi * quad.w[None, :] * quad.r[None, :] ** disk.abs_modes[:, None]
        T = fourier_synthesis(M_out, disk.L)
        return np.conj(T) @ np.einsum("dmi,mi->md", modes, weights)

    def green_columns(self, coeffs: np.ndarray, lifting: np.ndarray, M_out: int) -> np.ndarray:
        """DtN columns from Green's identity with the harmonic test function ``Ytilde_nk``."""
        a = self.disk.abs_modes
        T = fourier_synthesis(M_out, self.disk.L)
        grad = 2 * math.pi * (np.conj(T) @ (a[None, :] * lifting).T)
        return grad - self.volume_moments(coeffs, lifting, M_out)

    def rhs(self, lifting: np.ndarray) -> np.ndarray:
        b = self.disk.lifting_rhs_const(self.Q0, lifting)
        if self.coupling is not None:
            b = b + self.disk.lifting_rhs_q(self.qhat, self.quad, lifting, self.tables)
        return b


def assemble(q: Potential, q_ref_shift: float, kappa2: float, cfg: SolverConfig, disk: DiskGalerkin | None = None) -> GalerkinProblem:
    disk = disk or DiskGalerkin(cfg.M_trunc, cfg.N_rad)
    Q0 = kappa2 + 1j * q_ref_shift
    if q.kind == "constant":
        Q0 = Q0 + complex(q.constant)
    blocks = disk.block_operator(Q0)
    has_q = q.kind == "radial" or (q.kind == "bumps" and len(q.bumps) > 0)
    if not has_q:
        return GalerkinProblem(disk, Q0, blocks, None, None, None, None)
    quad = PolarQuadrature.for_potential(q, disk.L, cfg)
    qgrid = quad.grid_values(q).real
    qhat = disk.potential_modes(qgrid, quad)
    tables = disk.radial_tables(quad)
    C = disk.coupling_matrix(qhat, quad, tables)
    return GalerkinProblem(disk, Q0, blocks, quad, qhat, tables, C, qgrid)


def _check_conditioning(lu_piv, A_norm1: float, cfg: SolverConfig):
    lu, piv = lu_piv
    (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, A_norm1, norm="1")
    if rcond == 0 or 1.0 / rcond > cfg.cond_max:
        raise ResonanceError(f"Galerkin system condition estimate {1.0 / max(rcond, 1e-300):.3e} exceeds {cfg.cond_max:.1e}")


def solve_galerkin(
    q: Potential,
    q_ref_shift: float,
    kappa2: float,
    datum: HarmonicIndex | Sequence[HarmonicIndex],
    cfg: SolverConfig = SolverConfig(),
    *,
    problem: GalerkinProblem | None = None,
    M_out: int | None = None,
    flux: str = "green",
) -> GalerkinSolution:
    """Solve ``(Delta + i*shift + Re q + kappa^2) u = 0``, ``u = Y_mj`` on the circle.

    ``q.imaginary_shift`` is ignored in favour of ``q_ref_shift`` so the same
    real perturbation can be paired with different reference potentials.

    ``flux="green"`` (default) extracts the Neumann data through Green's
    identity ``<d_r u, Y_nk> = n delta - int Q u conj(Ytilde_nk)``, whose error
    is quadratic in the Galerkin error; ``flux="pointwise"`` differentiates the
    discrete solution at ``r = 1`` and converges only at the rate of the
    polynomial approximation of ``u`` (slow for compactly supported bumps).
    """
    data = (datum,) if isinstance(datum, HarmonicIndex) else tuple(datum)
    if max(ix.m for ix in data) > cfg.M_trunc:
        raise ValueError("datum degree exceeds M_trunc")
    prob = problem or assemble(q, q_ref_shift, kappa2, cfg)
    disk = prob.disk
    lifting = _lifting_matrix(data, disk.L)
    b = prob.rhs(lifting)
    if prob.coupling is None:
        coeffs = np.empty((len(data), 2 * disk.L + 1, disk.N), dtype=complex)
        conds = np.linalg.cond(prob.blocks)
        if np.max(conds) > cfg.cond_max:
            raise ResonanceError(f"Galerkin block condition {np.max(conds):.3e} exceeds {cfg.cond_max:.1e}")
        bb = b.reshape(len(data), 2 * disk.L + 1, disk.N)
        for i in range(2 * disk.L + 1):
            coeffs[:, i, :] = np.linalg.solve(prob.blocks[i], bb[:, i, :].T).T
        residual = 0.0
        Ac = np.einsum("mkl,dml->dmk", prob.blocks, coeffs).reshape(len(data), -1)
    else:
        A = prob.matrix()
        lu = sla.lu_factor(A)
        _check_conditioning(lu, np.linalg.norm(A, 1), cfg)
        x = sla.lu_solve(lu, b.T).T
        coeffs = x.reshape(len(data), 2 * disk.L + 1, disk.N)
        Ac = (A @ x.T).T
    bn = np.linalg.norm(b, axis=1)
    residual = float(np.max(np.linalg.norm(Ac - b, axis=1) / np.where(bn > 0, bn, 1.0)))
    if residual > cfg.residual_tol:
        raise ResonanceError(f"Galerkin residual {residual:.2e} exceeds {cfg.residual_tol:.1e}")
    M_out = max(ix.m for ix in data) if M_out is None else M_out
    if flux == "green":
        cols = prob.green_columns(coeffs, lifting, M_out)
    elif flux == "pointwise":
        cols = _project_flux(disk.flux_modes(coeffs, lifting), M_out, disk.L)
    else:
        raise ValueError(f"unknown flux extraction {flux!r}")
    return GalerkinSolution(data, coeffs, lifting, residual, cols, disk)


def eval_harmonic_extension(index: HarmonicIndex, point) -> float:
    """``|x|^m Y_mj(x / |x|)`` at a point ``(x, y)`` of the closed unit disk."""
    x, y = float(point[0]), float(point[1])
    r = math.hypot(x, y)
    if r > 1.0 + 1e-12:
        raise ValueError("point outside the closed unit disk")
    from .harmonics import eval_harmonic

    if index.m == 0:
        return float(eval_harmonic(index, 0.0))
    return float(r**index.m * eval_harmonic(index, math.atan2(y, x)))


# ---------------------------------------------------------------------------
# dissipative bound for Im Q >= 1


@dataclass(frozen=True)
class DissipativeReport:
    kappa2: float
    trials: int
    max_ratio: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + self.slack


def solve_dirichlet_source(disk: DiskGalerkin, Q0: complex, f_coeffs: np.ndarray) -> np.ndarray:
    """Solve ``(Delta + Q0) v = f``, ``v = 0`` on the circle, for ``f`` given in
    the orthonormal basis (shape ``(2L+1, N)``); returns ``v`` in the same basis."""
    blocks = disk.block_operator(Q0)
    # weak form: int grad v . grad psi - Q0 v psi = - int f psi
    v = np.empty_like(f_coeffs, dtype=complex)
    for i in range(blocks.shape[0]):
        v[i] = np.linalg.solve(blocks[i], -f_coeffs[i])
    return v


def verify_dissipative_bound(
    kappa2: float,
    trials: int,
    cfg: SolverConfig = SolverConfig(M_trunc=12, N_rad=16),
    *,
    slack: float = 0.02,
    seed: int = 0,
    source_modes: int = 6,
    source_orders: int = 6,
) -> DissipativeReport:
    """Check ``||v||_2 <= ||f||_2`` for ``(Delta + i + kappa^2) v = f``, ``v|_{S^1} = 0``.

    Sources are random smooth polynomials ``f`` (Fourier modes ``|mu| <=
    source_modes``, radial orders ``< source_orders``), represented exactly in
    the orthonormal Galerkin basis, so both norms are computed without
    quadrature error.
    """
    disk = DiskGalerkin(cfg.M_trunc, cfg.N_rad)
    rng = np.random.default_rng(seed)
    L, N = disk.L, disk.N
    worst = 0.0
    for _ in range(trials):
        f = np.zeros((2 * L + 1, N), dtype=complex)
        sm, so = min(source_modes, L), min(source_orders, N)
        f[L - sm : L + sm + 1, :so] = rng.standard_normal((2 * sm + 1, so)) + 1j * rng.standard_normal((2 * sm + 1, so))
        fn = np.linalg.norm(f)
        if fn == 0:
            continue
        v = solve_dirichlet_source(disk, kappa2 + 1j, f)
        worst = max(worst, float(np.linalg.norm(v) / fn))
    report = DissipativeReport(kappa2, trials, worst, slack)
    if not report.passed:
        raise InvariantViolation(f"||v||/||f|| = {worst:.4f} exceeds 1 + {slack}")
    return report


# ---------------------------------------------------------------------------
# families of bump sums with shared shapes


class BumpFamilySolver:
    """Repeated Galerkin solves for ``q = sum_b h_b eta_b`` with fixed shapes ``eta_b``.

    Every potential-dependent Galerkin quantity is linear in the heights, so the
    per-shape pieces are assembled once:

    * ``C_b``: coupling ``int eta_b phi conj(psi)`` between interior basis functions,
    * ``F_b``: right-hand side ``int eta_b Ytilde_mj conj(psi)``,
    * ``H_b``: moments ``int eta_b Ytilde_mj Ytilde_nk``.

    A member is then solved by the Neumann iteration
    ``x <- B^{-1} (b + C x)`` preconditioned with the exact constant-coefficient
    block operator ``B``; it converges geometrically when ``||B^{-1} C|| < 1``
    (small heights), with a dense LU fallback otherwise.

    Returned matrices follow the harmonic-matrix layout ``[nk, mj]``.
    """

    def __init__(self, shapes: Sequence[Potential], M: int, cfg: SolverConfig = SolverConfig()):
        if M > cfg.M_trunc:
            raise ValueError("data degree M exceeds M_trunc")
        self.cfg = cfg
        self.M = M
        self.disk = DiskGalerkin(cfg.M_trunc, cfg.N_rad)
        disk = self.disk
        union = Potential.from_bumps(
            [b for s in shapes for b in s.bumps], r0=max(s.r0 for s in shapes), alpha=shapes[0].alpha
        )
        self.quad = PolarQuadrature.for_potential(union, disk.L, cfg)
        self.tables = disk.radial_tables(self.quad)
        self.data = harmonic_indices(M)
        self.lifting = fourier_synthesis(M, disk.L)  # rows = data
        self.T = self.lifting
        lift = disk.basis.lift[disk.abs_modes]  # (2L+1, N)
        self._lift = lift
        n_data = len(self.data)
        # harmonic extensions on the grid (real)
        prof = self.lifting[:, :, None] * (self.quad.r[None, None, :] ** disk.abs_modes[None, :, None])
        ygrid = disk.synthesize(prof, self.quad.n_phi).real
        wgrid = (2 * math.pi / self.quad.n_phi) * self.quad.w[:, None]
        self.C, self.F, self.G, self.H = [], [], [], []
        for s in shapes:
            qgrid = self.quad.grid_values(s).real
            qhat = disk.potential_modes(qgrid, self.quad)
            self.C.append(disk.coupling_matrix(qhat, self.quad, self.tables))
            F = disk.lifting_rhs_q(qhat, self.quad, self.lifting, self.tables).T  # (size, n_data)
            self.F.append(F)
            self.G.append(np.conj(F).T)
            wq = wgrid * qgrid
            self.H.append(np.einsum("aip,bip->ba", ygrid, ygrid * wq[None], optimize=True))
        self.n_shapes = len(shapes)
        self.n_data = n_data

    def _blocks(self, Q0: complex):
        blocks = self.disk.block_operator(Q0)
        conds = np.linalg.cond(blocks)
        if np.max(conds) > self.cfg.cond_max:
            raise ResonanceError(f"reference block condition {np.max(conds):.3e} exceeds {self.cfg.cond_max:.1e}")
        return blocks, np.linalg.inv(blocks)

    def _apply_binv(self, binv: np.ndarray, x: np.ndarray) -> np.ndarray:
        L2, N = binv.shape[0], binv.shape[1]
        return np.matmul(binv, x.reshape(L2, N, -1)).reshape(L2 * N, -1)

    def _lift_moments(self, x: np.ndarray) -> np.ndarray:
        """``int phi-part conj(Ytilde_nk)`` for coefficient columns ``x`` (size, n_data)."""
        disk = self.disk
        xm = x.reshape(2 * disk.L + 1, disk.N, -1)
        per_mode = np.einsum("mkd,mk->md", xm, self._lift)
        return np.conj(self.T) @ per_mode

    def reference(self, Q0: complex) -> dict:
        blocks, binv = self._blocks(Q0)
        b0 = self.disk.lifting_rhs_const(Q0, self.lifting).T
        x0 = self._apply_binv(binv, b0)
        return {"Q0": Q0, "blocks": blocks, "binv": binv, "b0": b0, "x0": x0}

    def member_operator(self, heights: Sequence[float]) -> dict:
        """Height-weighted sums of the per-shape pieces (``C``, ``F``, ``G``, ``H``)."""
        h = np.asarray(heights, dtype=float)
        if h.shape != (self.n_shapes,):
            raise ValueError("one height per shape required")
        active = [i for i in range(self.n_shapes) if h[i] != 0.0]
        if not active:
            return {"active": ()}
        out = {"active": tuple(active)}
        for key, parts in (("C", self.C), ("F", self.F), ("G", self.G), ("H", self.H)):
            acc = h[active[0]] * parts[active[0]]
            for i in active[1:]:
                acc += h[i] * parts[i]
            out[key] = acc
        return out

    def solve(self, heights: Sequence[float], ref: dict, scale: float = 1.0, op: dict | None = None) -> dict:
        """Solve for ``q = scale * sum_b heights_b eta_b``.

        Returns the Galerkin coefficients and the two volume pieces of
        ``Gamma = I1 + I2`` (``I1 = -int q u conj(Ytilde)``,
        ``I2 = -Q0 int (u - u_ref) conj(Ytilde)``).
        """
        op = self.member_operator(heights) if op is None else op
        Q0, binv, b0, x0 = ref["Q0"], ref["binv"], ref["b0"], ref["x0"]
        if not op["active"] or scale == 0.0:
            z = np.zeros((self.n_data, self.n_data), dtype=complex)
            return {"coeffs": x0, "I1": z, "I2": z.copy(), "iterations": 0, "method": "none", "residual": 0.0}
        L2, N = 2 * self.disk.L + 1, self.disk.N
        blocks = ref["blocks"]
        C = op["C"]
        b = b0 + scale * op["F"]
        bnorm = np.linalg.norm(b, axis=0)
        x = self._apply_binv(binv, b)
        xnorm = np.linalg.norm(x)
        method, residual, converged = "neumann", np.inf, False
        for it in range(1, self.cfg.max_iter + 1):
            x_new = self._apply_binv(binv, b + scale * (C @ x))
            diff = x - x_new
            step = np.linalg.norm(diff)
            # (B - C) x - b = B (x - x_new) exactly, so the residual of the
            # previous iterate comes for free; x_new is at least as accurate
            residual = float(np.max(np.linalg.norm(np.matmul(blocks, diff.reshape(L2, N, -1)).reshape(diff.shape), axis=0) / bnorm))
            x = x_new
            if step <= self.cfg.iter_tol * xnorm:
                converged = True
                break
            if it > 3 and step > 0.5 * xnorm:
                break
        if not converged:
            A = sla.block_diag(*blocks) - scale * C
            lu = sla.lu_factor(A)
            _check_conditioning(lu, np.linalg.norm(A, 1), self.cfg)
            x = sla.lu_solve(lu, b)
            residual = float(np.max(np.linalg.norm(A @ x - b, axis=0) / bnorm))
            method, it = "lu", 0
        if residual > self.cfg.residual_tol:
            raise ResonanceError(f"family solve residual {residual:.2e} exceeds {self.cfg.residual_tol:.1e}")
        I1 = -scale * (op["H"] + op["G"] @ x)
        I2 = -Q0 * self._lift_moments(x - x0)
        return {"coeffs": x, "I1": I1, "I2": I2, "iterations": it, "method": method, "residual": residual}
