"""Ascending-series Bessel functions J_m, used as an independent oracle.

Nothing here calls :mod:`scipy.special`; the series is summed directly so the
solvers can be checked against a separate code path.
"""
from __future__ import annotations

import cmath
import math


def bessel_j(m: int, z: complex, tol: float = 1e-17, max_terms: int = 500) -> complex:
    """``J_m(z) = sum_k (-1)^k (z/2)^{2k+m} / (k! (k+m)!)`` for integer ``m``.

    Accurate to near machine precision for ``|z| <~ 15``; beyond that the
    alternating series loses digits to cancellation.
    """
    if m < 0:
        return (-1) ** m * bessel_j(-m, z, tol, max_terms)
    half = z / 2.0
    term = half**m / math.factorial(m) if m < 170 else cmath.exp(m * cmath.log(half) - math.lgamma(m + 1))
    total = term
    h2 = half * half
    for k in range(1, max_terms):
        term *= -h2 / (k * (k + m))
        total += term
        if abs(term) <= tol * max(abs(total), 1e-300) and k > abs(half):
            break
    if isinstance(z, complex) or isinstance(total, complex):
        return complex(total)
    return float(total)


def bessel_j_prime(m: int, z: complex) -> complex:
    """``J_m'(z) = (J_{m-1}(z) - J_{m+1}(z)) / 2``."""
    return 0.5 * (bessel_j(m - 1, z) - bessel_j(m + 1, z))


def bessel_dtn(m: int, c: complex) -> complex:
    """DtN eigenvalue of ``Delta + c`` on the unit disk for mode ``m``.

    The regular solution is ``J_m(sqrt(c) r)``; its log-derivative at ``r = 1``
    is ``sqrt(c) J_m'(sqrt(c)) / J_m(sqrt(c))``.  For ``c = 0`` this is ``m``.
    """
    if c == 0:
        return float(m)
    k = cmath.sqrt(c)
    val = k * bessel_j_prime(m, k) / bessel_j(m, k)
    if isinstance(c, complex):
        return complex(val)
    return float(val.real) if isinstance(val, complex) else float(val)


def bessel_zero(m: int, guess: float, tol: float = 1e-15, max_iter: int = 50) -> float:
    """Newton iteration for a real zero of ``J_m`` starting from ``guess``."""
    x = float(guess)
    for _ in range(max_iter):
        f = bessel_j(m, x)
        step = f / bessel_j_prime(m, x)
        x -= step
        if abs(step) <= tol * abs(x):
            return x
    raise RuntimeError(f"Newton iteration for a zero of J_{m} did not converge from {guess}")


def first_dirichlet_eigenvalue() -> float:
    """``kappa_1 = j_{0,1}^2``, the first Dirichlet eigenvalue of ``-Delta`` on the unit disk."""
    return bessel_zero(0, 2.4) ** 2


KAPPA1 = first_dirichlet_eigenvalue()
