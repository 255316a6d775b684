"""Small dense complex matrix kernel.

Matrices are plain ``numpy`` complex arrays of shape ``(n, n)``.  The only
non-trivial routine is :func:`charpoly_in_z`, which recovers the
coefficients of ``det(builder(z))`` from values at interpolation nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import IllConditionedNodesError

__all__ = [
    "PolyInZ",
    "commutator",
    "determinant",
    "charpoly_in_z",
    "circle_nodes",
    "diag",
]

VANDERMONDE_COND_MAX = 1e12
TRIM_RTOL = 1e-12


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def diag(values) -> np.ndarray:
    return np.diag(np.asarray(values, dtype=complex))


def determinant(m: np.ndarray) -> complex:
    """Determinant by LU with partial pivoting.

    Triangular inputs short-circuit to the product of the diagonal, so
    they are exact up to the rounding of that product.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"determinant needs a square matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        return 1.0 + 0j
    if not np.any(np.tril(m, -1)) or not np.any(np.triu(m, 1)):
        return complex(np.prod(np.diag(m)))
    return complex(np.linalg.det(m))


@dataclass(frozen=True)
class PolyInZ:
    """Polynomial ``sum_k coeffs[k] z^k`` (lowest degree first)."""

    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def __getitem__(self, k: int) -> complex:
        return complex(self.coeffs[k]) if 0 <= k < len(self.coeffs) else 0j

    def roots(self) -> np.ndarray:
        return np.polynomial.polynomial.polyroots(self.coeffs)

    @classmethod
    def trimmed(cls, coeffs, rtol: float = TRIM_RTOL) -> "PolyInZ":
        c = np.asarray(coeffs, dtype=complex)
        scale = np.max(np.abs(c)) if c.size else 0.0
        end = len(c)
        while end > 1 and abs(c[end - 1]) <= rtol * scale:
            end -= 1
        return cls(c[:end].copy())


def circle_nodes(count: int, radius: float = 1.0) -> np.ndarray:
    """``count`` equally spaced points on a circle (scaled roots of unity)."""
    k = np.arange(count)
    return radius * np.exp(2j * np.pi * k / count)


def charpoly_in_z(
    builder: Callable[[complex], np.ndarray],
    degree: int,
    nodes: Sequence[complex] | None = None,
    radius: float = 1.0,
    trim: bool = True,
) -> PolyInZ:
    """Coefficients of ``det(builder(z))``, a polynomial of degree <= ``degree``.

    The determinant is sampled at ``degree + 1`` nodes (by default equally
    spaced on a circle of the given radius) and the Vandermonde system is
    solved after column scaling by powers of the node radius.
    """
    if nodes is None:
        nodes = circle_nodes(degree + 1, radius)
    nodes = np.asarray(nodes, dtype=complex)
    if nodes.shape != (degree + 1,):
        raise ValueError(f"need {degree + 1} nodes for degree {degree}, got {nodes.shape}")
    scale = float(np.max(np.abs(nodes))) or 1.0
    vander = np.vander(nodes / scale, degree + 1, increasing=True)
    cond = np.linalg.cond(vander)
    if not np.isfinite(cond) or cond > VANDERMONDE_COND_MAX:
        raise IllConditionedNodesError(f"Vandermonde condition number {cond:.3g} exceeds {VANDERMONDE_COND_MAX:g}")
    values = np.array([determinant(builder(z)) for z in nodes])
    coeffs = np.linalg.solve(vander, values) / scale ** np.arange(degree + 1)
    return PolyInZ.trimmed(coeffs) if trim else PolyInZ(coeffs)
