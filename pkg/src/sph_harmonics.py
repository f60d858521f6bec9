"""
Real Cartesian spherical harmonics, truncated expansions r_L and a least-squares fitting oracle.

Basis functions are indexed flat as j = l*l + l + m, so an expansion of degree L has (L+1)^2
coefficients. Normalization is orthonormal over the unit sphere without the Condon-Shortley phase,
which reproduces the closed forms in CARTESIAN_TABLE for l <= 2.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .exceptions import RankDeficientError, ValidationError
from .sphere_geom import DirectionSet, SphereCoord, UnitDirection, omega_array

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10

_C00 = 0.5 * math.sqrt(1.0 / math.pi)
_C1 = math.sqrt(3.0 / (4.0 * math.pi))
_C2 = 0.5 * math.sqrt(15.0 / math.pi)
_C20 = 0.25 * math.sqrt(5.0 / math.pi)
_C22 = 0.25 * math.sqrt(15.0 / math.pi)

CARTESIAN_TABLE: dict[tuple[int, int], Callable[[float, float, float], float]] = {
    (0, 0): lambda x, y, z: _C00,
    (1, -1): lambda x, y, z: _C1 * y,
    (1, 0): lambda x, y, z: _C1 * z,
    (1, 1): lambda x, y, z: _C1 * x,
    (2, -2): lambda x, y, z: _C2 * x * y,
    (2, -1): lambda x, y, z: _C2 * y * z,
    (2, 0): lambda x, y, z: _C20 * (-x * x - y * y + 2.0 * z * z),
    (2, 1): lambda x, y, z: _C2 * z * x,
    (2, 2): lambda x, y, z: _C22 * (x * x - y * y),
}


def coefficient_count(max_degree: int) -> int:
    return (max_degree + 1) ** 2


def flat_index(l: int, m: int) -> int:
    return l * l + l + m


@dataclass(frozen=True)
class ShExpansion:
    """
    Truncated expansion r_L(d) = sum_l sum_m c_{l,m} Y_{l,m}(omega(d))

    Attributes:
        max_degree (int): L
        coeffs (np.ndarray): Flat coefficient vector of length (L+1)^2, index l*l + l + m
    """
    max_degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        """
        :raise ValidationError: If the degree is negative, the count is wrong or entries are not finite
        """
        if self.max_degree < 0:
            raise ValidationError(f"max_degree must be >= 0, got {self.max_degree}")
        if self.coeffs.shape != (coefficient_count(self.max_degree),):
            raise ValidationError(
                f"expected {coefficient_count(self.max_degree)} coefficients, got shape {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValidationError("coefficients must be finite")

    def coefficient(self, l: int, m: int) -> float:
        _check_degree_order(l, m)
        return float(self.coeffs[flat_index(l, m)])

    def evaluate(self, unit_vectors: np.ndarray) -> np.ndarray:
        return basis_matrix(self.max_degree, unit_vectors) @ self.coeffs

    @classmethod
    def zeros(cls, max_degree: int) -> "ShExpansion":
        return cls(max_degree, np.zeros(coefficient_count(max_degree)))


@dataclass(frozen=True)
class ShFit:
    """
    Result of a least-squares expansion fit

    Attributes:
        expansion (ShExpansion): Optimal coefficients
        max_residual (float): max_j |r_L(d_j) - r_j|
        mean_residual (float): mean_j |r_L(d_j) - r_j|
        condition (float): Condition estimate of the design matrix
    """
    expansion: ShExpansion
    max_residual: float
    mean_residual: float
    condition: float


def _check_degree_order(l: int, m: int) -> None:
    if l < 0:
        raise ValidationError(f"degree l must be >= 0, got {l}")
    if abs(m) > l:
        raise ValidationError(f"order m must satisfy |m| <= l, got l={l}, m={m}")


def _legendre_factors(max_degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Recurrence coefficients a[l, m], b[l, m] of the orthonormal associated Legendre functions."""
    a = np.zeros((max_degree + 1, max_degree + 1))
    b = np.zeros((max_degree + 1, max_degree + 1))
    for m in range(max_degree + 1):
        prod = 1.0
        for k in range(1, m + 1):
            prod *= (2 * k + 1) / (2 * k)
        a[m, m] = math.sqrt(prod / (4.0 * math.pi))
        for l in range(m + 1, max_degree + 1):
            a[l, m] = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            if l >= m + 2:
                b[l, m] = -math.sqrt((2 * l + 1) * ((l - 1) ** 2 - m * m) / ((2 * l - 3) * (l * l - m * m)))
    return a, b


def basis_matrix(max_degree: int, unit_vectors: np.ndarray) -> np.ndarray:
    """
    Evaluate every Y_{l,m} with l <= max_degree at each unit vector.

    The sin^m(theta) e^{i m phi} factor is taken as (x + i y)^m so the basis stays polynomial
    in (x, y, z) and exact at the poles.

    :return: (n, (L+1)^2) matrix, column l*l + l + m
    """
    if max_degree < 0:
        raise ValidationError(f"max_degree must be >= 0, got {max_degree}")
    u = np.asarray(unit_vectors, dtype=np.float64).reshape(-1, 3)
    x, y, z = u[:, 0], u[:, 1], u[:, 2]
    a, b = _legendre_factors(max_degree)

    out = np.empty((len(u), coefficient_count(max_degree)))
    xy = x + 1j * y
    azimuth = np.ones(len(u), dtype=np.complex128)
    for m in range(max_degree + 1):
        q_prev2 = np.zeros(len(u))
        q_prev = np.full(len(u), a[m, m])
        for l in range(m, max_degree + 1):
            if l == m:
                q = q_prev
            elif l == m + 1:
                q = a[l, m] * z * q_prev
            else:
                q = a[l, m] * z * q_prev + b[l, m] * q_prev2
            if l > m:
                q_prev2, q_prev = q_prev, q

            if m == 0:
                out[:, flat_index(l, 0)] = q
            else:
                out[:, flat_index(l, m)] = math.sqrt(2.0) * q * azimuth.real
                out[:, flat_index(l, -m)] = math.sqrt(2.0) * q * azimuth.imag
        azimuth = azimuth * xy
    return out


def eval_basis(l: int, m: int, u: UnitDirection) -> float:
    """
    Real spherical harmonic Y_{l,m}(u); closed forms for l <= 2, recurrence above.

    :raise ValidationError: If |m| > l or l < 0
    """
    _check_degree_order(l, m)
    if (l, m) in CARTESIAN_TABLE:
        return float(CARTESIAN_TABLE[(l, m)](u.x, u.y, u.z))
    return float(basis_matrix(l, u.as_array())[0, flat_index(l, m)])


def eval_expansion(e: ShExpansion, d: SphereCoord) -> float:
    return float(e.evaluate(omega_array(d.theta, d.phi))[0])


def fit_expansion(directions: DirectionSet, radii: np.ndarray, max_degree: int) -> ShFit:
    """
    Least-squares coefficients minimizing sum_j (r_L(d_j) - r_j)^2.

    Solved with a column-pivoted QR factorization; rank is judged relative to the largest
    diagonal entry of R with tolerance RANK_TOLERANCE.

    :raise ValidationError: If there are fewer samples than coefficients
    :raise RankDeficientError: If the design matrix is rank deficient
    """
    radii = np.asarray(radii, dtype=np.float64).reshape(-1)
    n_coeffs = coefficient_count(max_degree)
    if len(radii) != len(directions):
        raise ValidationError(f"got {len(directions)} directions but {len(radii)} radii")
    if len(radii) < n_coeffs:
        raise ValidationError(f"degree {max_degree} needs at least {n_coeffs} samples, got {len(radii)}")
    if not np.all(np.isfinite(radii)):
        raise ValidationError("radii must be finite")

    design = basis_matrix(max_degree, directions.unit_vectors())
    q, r, pivot = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    condition = float(diag[0] / diag[-1]) if diag[-1] > 0 else math.inf
    if diag[-1] <= RANK_TOLERANCE * diag[0]:
        raise RankDeficientError(f"design matrix for degree {max_degree} is rank deficient", condition)

    solution = scipy.linalg.solve_triangular(r, q.T @ radii)
    coeffs = np.empty(n_coeffs)
    coeffs[pivot] = solution

    residual = np.abs(design @ coeffs - radii)
    fit = ShFit(
        expansion=ShExpansion(max_degree, coeffs),
        max_residual=float(residual.max()),
        mean_residual=float(residual.mean()),
        condition=condition,
    )
    logger.debug("fit degree %d on %d samples: max residual %.3e", max_degree, len(radii), fit.max_residual)
    return fit
