"""
Real spherical-harmonic synthesis by the stable normalized associated-Legendre recurrence.

Basis (orthonormal on the unit sphere, no Condon-Shortley phase):
    Y_l0      = Pbar_l^0(cos t)
    Y_lm      = sqrt(2) Pbar_l^m(cos t) cos(m p)     m > 0
    Y_l,-m    = sqrt(2) Pbar_l^m(cos t) sin(m p)     m > 0
with Pbar_l^m = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m.
"""
from typing import Iterator, Tuple
import numpy as np


def _legendre_columns(ell_max: int, cos_t: np.ndarray, sin_t: np.ndarray) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield (m, Pbar[l - m]) for m = 0..ell_max, rows l = m..ell_max."""
    pmm = np.full_like(cos_t, np.sqrt(1.0 / (4.0 * np.pi)))
    for m in range(ell_max + 1):
        if m > 0:
            pmm = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_t * pmm
        column = np.empty((ell_max - m + 1,) + cos_t.shape)
        column[0] = pmm
        if m < ell_max:
            column[1] = np.sqrt(2.0 * m + 3.0) * cos_t * pmm
        a_prev = np.sqrt(2.0 * m + 3.0)
        for ell in range(m + 2, ell_max + 1):
            a = np.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
            column[ell - m] = a * (cos_t * column[ell - m - 1] - column[ell - m - 2] / a_prev)
            a_prev = a
        yield m, column


def _mode_profiles(coeffs: np.ndarray, ell_min: int, ell_max: int, theta: np.ndarray):
    """Per-order latitude profiles A_m(theta), B_m(theta) so that f = sum_m A_m cos(m p) + B_m sin(m p)."""
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    A = np.zeros((ell_max + 1,) + theta.shape)
    B = np.zeros((ell_max + 1,) + theta.shape)
    for m, column in _legendre_columns(ell_max, cos_t, sin_t):
        weight = 1.0 if m == 0 else np.sqrt(2.0)
        for ell in range(max(m, ell_min), ell_max + 1):
            base = ell * ell - ell_min * ell_min + ell  # index of m = 0 within the degree block
            A[m] += weight * coeffs[base + m] * column[ell - m]
            if m > 0:
                B[m] += weight * coeffs[base - m] * column[ell - m]
    return A, B


def synthesize_points(coeffs: np.ndarray, ell_min: int, ell_max: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    A, B = _mode_profiles(coeffs, ell_min, ell_max, theta)
    m = np.arange(ell_max + 1).reshape((-1,) + (1,) * theta.ndim)
    return (A * np.cos(m * phi) + B * np.sin(m * phi)).sum(axis=0)


def synthesize_grid(coeffs: np.ndarray, ell_min: int, ell_max: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Values on the tensor grid theta x phi, shape (len(theta), len(phi))."""
    A, B = _mode_profiles(coeffs, ell_min, ell_max, theta)
    m = np.arange(ell_max + 1)[:, None]
    return A.T @ np.cos(m * phi[None, :]) + B.T @ np.sin(m * phi[None, :])
