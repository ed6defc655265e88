"""Circular harmonics on the unit circle and Sobolev-weighted matrix norms.

Basis convention (d = 2), L^2(S^1)-orthonormal and real::

    Y_01(phi) = 1 / sqrt(2 pi)
    Y_m1(phi) = cos(m phi) / sqrt(pi)      m >= 1
    Y_m2(phi) = sin(m phi) / sqrt(pi)      m >= 1

A truncated operator ``A`` is stored as a dense matrix ``a[row, col]`` with
``row`` the index of the test harmonic ``Y_nk`` and ``col`` the index of the
data harmonic ``Y_mj``, i.e. ``a[idx(n,k), idx(m,j)] = <A Y_mj, Y_nk>``.
The duality pairing is conjugate-linear in its second slot.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, pi, sqrt

import numpy as np


class InvalidDimensionError(ValueError):
    pass


class InvalidIndexError(ValueError):
    pass


def harmonic_count(d: int, m: int) -> int:
    """Number of linearly independent degree-``m`` harmonics on S^{d-1}."""
    if d < 2:
        raise InvalidDimensionError(f"dimension must be >= 2, got {d}")
    if m < 0:
        raise InvalidIndexError(f"degree must be nonnegative, got {m}")
    if m == 0:
        return 1

    def binom(n, k):
        return comb(n, k) if n >= k >= 0 else 0

    return binom(m + d - 1, d - 1) - binom(m + d - 3, d - 1)


@dataclass(frozen=True, order=True)
class HarmonicIndex:
    m: int
    j: int

    def __post_init__(self):
        if self.m < 0:
            raise InvalidIndexError(f"degree must be nonnegative, got {self.m}")
        if not 1 <= self.j <= harmonic_count(2, self.m):
            raise InvalidIndexError(f"order j={self.j} out of range for m={self.m}")


@lru_cache(maxsize=None)
def harmonic_indices(M: int) -> tuple[HarmonicIndex, ...]:
    """All d = 2 indices with degree <= M, ordered (0,1), (1,1), (1,2), (2,1), ..."""
    out = [HarmonicIndex(0, 1)]
    for m in range(1, M + 1):
        out.extend((HarmonicIndex(m, 1), HarmonicIndex(m, 2)))
    return tuple(out)


def basis_size(M: int, d: int = 2) -> int:
    return sum(harmonic_count(d, m) for m in range(M + 1))


def position(index: HarmonicIndex) -> int:
    """Flat position of ``index`` in :func:`harmonic_indices` ordering."""
    return 0 if index.m == 0 else 2 * index.m - 2 + index.j


@lru_cache(maxsize=None)
def degrees(M: int) -> np.ndarray:
    """Degree m of each flat basis position (read-only array)."""
    arr = np.array([ix.m for ix in harmonic_indices(M)], dtype=int)
    arr.flags.writeable = False
    return arr


def eval_harmonic(index: HarmonicIndex, angle):
    """Evaluate the orthonormal circular harmonic ``Y_mj`` at ``angle`` (radians)."""
    angle = np.asarray(angle, dtype=float)
    m, j = index.m, index.j
    if m == 0:
        return np.full_like(angle, 1.0 / sqrt(2 * pi))[()]
    if j == 1:
        return (np.cos(m * angle) / sqrt(pi))[()]
    return (np.sin(m * angle) / sqrt(pi))[()]


def fourier_synthesis(M: int, mode_max: int | None = None) -> np.ndarray:
    """Matrix ``T`` with ``Y_{row}(phi) = sum_mu T[row, mu + mode_max] e^{i mu phi}``.

    Columns run over complex Fourier modes ``-mode_max..mode_max``.
    """
    L = M if mode_max is None else mode_max
    if L < M:
        raise ValueError("mode_max must be >= M")
    T = np.zeros((basis_size(M), 2 * L + 1), dtype=complex)
    T[0, L] = 1.0 / sqrt(2 * pi)
    c = 1.0 / (2.0 * sqrt(pi))
    for m in range(1, M + 1):
        T[2 * m - 1, L + m] = c
        T[2 * m - 1, L - m] = c
        T[2 * m, L + m] = -1j * c
        T[2 * m, L - m] = 1j * c
    return T


@dataclass(frozen=True)
class CoeffVector:
    """Coefficients ``a_mj`` of a function on S^1 in the harmonic basis."""

    M: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.shape != (basis_size(self.M),):
            raise ValueError(f"expected {basis_size(self.M)} entries, got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "entries", e)

    @classmethod
    def from_dict(cls, M: int, values: dict) -> "CoeffVector":
        e = np.zeros(basis_size(M), dtype=complex)
        for (m, j), v in values.items():
            e[position(HarmonicIndex(m, j))] = v
        return cls(M, e)


@dataclass(frozen=True)
class HarmonicMatrix:
    """Truncated matrix ``a[nk, mj] = <A Y_mj, Y_nk>`` for degrees <= M."""

    M: int
    entries: np.ndarray
    d: int = 2

    def __post_init__(self):
        if self.d != 2:
            raise InvalidDimensionError("matrix storage is implemented for d = 2 only")
        n = basis_size(self.M, self.d)
        e = np.asarray(self.entries, dtype=complex)
        if e.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("matrix entries must be finite")
        object.__setattr__(self, "entries", e)

    def __sub__(self, other: "HarmonicMatrix") -> "HarmonicMatrix":
        if self.M != other.M or self.d != other.d:
            raise ValueError("truncation mismatch")
        return HarmonicMatrix(self.M, self.entries - other.entries, self.d)

    def __add__(self, other: "HarmonicMatrix") -> "HarmonicMatrix":
        if self.M != other.M or self.d != other.d:
            raise ValueError("truncation mismatch")
        return HarmonicMatrix(self.M, self.entries + other.entries, self.d)

    def truncate(self, M: int) -> "HarmonicMatrix":
        if M > self.M:
            raise ValueError(f"cannot truncate M={self.M} matrix to M={M}")
        n = basis_size(M, self.d)
        return HarmonicMatrix(M, self.entries[:n, :n], self.d)

    def max_degree_grid(self) -> np.ndarray:
        """``ell = max{m, n}`` for every stored entry."""
        deg = degrees(self.M)
        return np.maximum.outer(deg, deg)


def sobolev_norm(v: CoeffVector, s: float) -> float:
    """``(sum (1+m)^{2s} |a_mj|^2)^{1/2}``."""
    w = (1.0 + degrees(v.M)) ** s
    return float(np.linalg.norm(w * v.entries))


def x_s_norm(A: HarmonicMatrix, s: float) -> float:
    """Weighted sup norm ``sup (1 + max{m,n})^{d/2 - s} |a_mjnk|``."""
    if A.entries.size == 0:
        return 0.0
    weight = (1.0 + A.max_degree_grid()) ** (A.d / 2.0 - s)
    return float(np.max(weight * np.abs(A.entries)))


class NumericalError(RuntimeError):
    pass


def op_norm_s_to_minus_s(A: HarmonicMatrix, s: float) -> float:
    """Exact operator norm H^s -> H^{-s} of the truncated matrix.

    With the weighted sequence norm, this is the spectral norm of
    ``D A D`` where ``D = diag((1+m)^{-s})``.
    """
    dw = (1.0 + degrees(A.M)) ** (-s)
    scaled = dw[:, None] * A.entries * dw[None, :]
    try:
        sv = np.linalg.svd(scaled, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    return float(sv[0]) if sv.size else 0.0
