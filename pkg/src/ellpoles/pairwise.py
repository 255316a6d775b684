"""Pairwise evaluation helpers shared by the many-body modules."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import elliptic as ell
from .elliptic import Lattice
from .errors import CollisionError

COLLISION_TOL = 1e-6


def differences(x) -> np.ndarray:
    """Matrix of ``x_i - x_j``."""
    x = np.asarray(x, dtype=complex)
    return x[:, None] - x[None, :]


def offdiag(fn, x) -> np.ndarray:
    """Evaluate ``fn`` on the off-diagonal entries of ``x_i - x_j``; zeros on the diagonal."""
    x = np.asarray(x, dtype=complex)
    n = len(x)
    out = np.zeros((n, n), dtype=complex)
    if n > 1:
        mask = ~np.eye(n, dtype=bool)
        out[mask] = fn(differences(x)[mask])
    return out


def wp_matrix(x, lat: Lattice, order: int = 0) -> np.ndarray:
    return offdiag(lambda d: ell.wp(d, lat, order), x)


def zeta_matrix(x, lat: Lattice) -> np.ndarray:
    return offdiag(lambda d: ell.zeta(d, lat), x)


def phi_matrix(x, lam, lat: Lattice, order: int = 0, gauged: bool = False) -> np.ndarray:
    return offdiag(lambda d: ell.phi(d, lam, lat, order, gauged), x)


def cross(fn, x, y) -> np.ndarray:
    """Matrix ``fn(x_i - y_j)`` for two different species."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return fn(x[:, None] - y[None, :])


def min_reduced_distance(d, lat: Lattice) -> float:
    d = np.asarray(d, dtype=complex).ravel()
    if d.size == 0:
        return np.inf
    xr = ell._reduce_arrays(d, lat)[0]
    return float(np.min(np.abs(xr)))


def configuration_distance(a, b, lat: Lattice) -> float:
    """Distance between two pole configurations as unordered sets modulo the lattice.

    Particles are matched by minimizing the total reduced distance; the
    largest matched distance is returned.  Labels are not meaningful for
    complex flows, which can permute poles and shift them by periods.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("configurations must have the same number of poles")
    if a.size == 0:
        return 0.0
    cost = np.abs(ell._reduce_arrays((a[:, None] - b[None, :]).ravel(), lat)[0]).reshape(len(a), len(b))
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


def check_distinct(x, lat: Lattice, tol: float = COLLISION_TOL, shifts=()) -> None:
    """Raise :class:`CollisionError` if two positions coincide modulo the lattice.

    ``shifts`` lists extra offsets ``s`` for which ``x_i - x_j + s`` must
    also stay away from the lattice (``i != j``).
    """
    x = np.asarray(x, dtype=complex)
    n = len(x)
    if n < 2:
        return
    mask = ~np.eye(n, dtype=bool)
    d = differences(x)[mask]
    scale = lat.pole_scale
    if min_reduced_distance(d, lat) <= tol * scale:
        raise CollisionError("particles collide modulo the lattice")
    for s in shifts:
        if min_reduced_distance(d + s, lat) <= tol * scale:
            raise CollisionError(f"x_i - x_j + {s} reaches a lattice point")


def check_cross(x, y, lat: Lattice, tol: float = COLLISION_TOL, shift: complex = 0.0) -> None:
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    d = (x[:, None] - y[None, :]).ravel() + shift
    if min_reduced_distance(d, lat) <= tol * lat.pole_scale:
        raise CollisionError("a pole meets a zero modulo the lattice")


def random_points(rng: np.random.Generator, lat: Lattice, n: int, min_sep: float = 0.15,
                  avoid=(), max_tries: int = 10000) -> np.ndarray:
    """``n`` points uniform in the open reduced cell with pairwise separation.

    Separations are measured modulo the lattice in units of the shortest
    period.  ``avoid`` lists offsets ``s`` for which ``x_i - x_j + s`` must
    also be separated from the lattice, and arbitrary fixed points which the
    differences must avoid as well.
    """
    sep = min_sep * lat.pole_scale
    for _ in range(max_tries):
        ab = rng.uniform(-0.5, 0.5, size=(2, n))
        pts = lat.point(ab[0], ab[1])
        if n < 2:
            return pts
        mask = ~np.eye(n, dtype=bool)
        d = differences(pts)[mask]
        if min_reduced_distance(d, lat) < sep:
            continue
        if any(min_reduced_distance(d + s, lat) < sep for s in avoid):
            continue
        return pts
    raise RuntimeError("could not place random points with the requested separation")


def random_offlattice(rng: np.random.Generator, lat: Lattice, min_dist: float = 0.15) -> complex:
    """A random point of the cell with reduced distance >= min_dist from the lattice."""
    while True:
        ab = rng.uniform(-0.5, 0.5, size=2)
        p = complex(lat.point(ab[0], ab[1]))
        if min_reduced_distance(p, lat) >= min_dist * lat.pole_scale:
            return p


def random_disk(rng: np.random.Generator, n: int, radius: float = 1.0) -> np.ndarray:
    """``n`` points uniform in the disk ``|v| <= radius``."""
    r = radius * np.sqrt(rng.uniform(0, 1, n))
    t = rng.uniform(0, 2 * np.pi, n)
    return r * np.exp(1j * t)
