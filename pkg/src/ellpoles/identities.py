"""Randomised verification of the Weierstrass and kernel identities.

Every identity is written as a list of terms that must sum to zero.  The
residual of one trial is ``|sum(terms)| / sum(|terms|)``, which measures the
cancellation relative to the size of the individual contributions.  Matrix
identities use the largest entry of each quantity instead of the modulus.
"""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import elliptic as ell
from .elliptic import Lattice
from .linalg import commutator, diag
from .pairwise import differences, min_reduced_distance, phi_matrix, wp_matrix

__all__ = [
    "SCALAR_IDENTITIES",
    "MATRIX_IDENTITIES",
    "identity_suite",
    "lame_equation_wrong_sign",
    "random_lattice",
    "relative_residual",
    "sample_arguments",
]

_MIN_DIST = 0.1


def relative_residual(terms) -> np.ndarray:
    """Elementwise ``|sum| / sum |.|`` over a list of equally shaped arrays."""
    terms = [np.asarray(t, dtype=complex) for t in terms]
    total = sum(terms)
    scale = sum(np.abs(t) for t in terms)
    return np.abs(total) / np.where(scale > 0, scale, 1.0)


def _matrix_residual(terms) -> float:
    terms = [np.asarray(t, dtype=complex) for t in terms]
    total = sum(terms)
    scale = sum(float(np.max(np.abs(t))) for t in terms)
    return float(np.max(np.abs(total))) / scale if scale > 0 else 0.0


def _far(vals, lat, dist):
    vals = np.asarray(vals, dtype=complex)
    xr = ell._reduce_arrays(vals, lat)[0]
    return np.abs(xr) >= dist * lat.pole_scale


def sample_arguments(rng: np.random.Generator, lat: Lattice, trials: int, min_dist: float = _MIN_DIST):
    """Arrays ``x, y, lam`` in the reduced cell, with ``x, y, lam, x +- y,
    x +- lam, y + lam, x + y + lam`` all at distance ``>= min_dist`` (units of
    the shortest period) from the lattice."""
    x = np.empty(trials, dtype=complex)
    y = np.empty(trials, dtype=complex)
    lam = np.empty(trials, dtype=complex)
    todo = np.arange(trials)
    while todo.size:
        ab = rng.uniform(-0.5, 0.5, size=(6, todo.size))
        xs = lat.point(ab[0], ab[1])
        ys = lat.point(ab[2], ab[3])
        ls = lat.point(ab[4], ab[5])
        ok = np.ones(todo.size, dtype=bool)
        for v in (xs, ys, ls, xs + ys, xs - ys, xs + ls, xs - ls, ys + ls, xs + ys + ls):
            ok &= _far(v, lat, min_dist)
        x[todo[ok]], y[todo[ok]], lam[todo[ok]] = xs[ok], ys[ok], ls[ok]
        todo = todo[~ok]
    return x, y, lam


# scalar identities: f(x, y, lam, lat) -> list of terms

def _kernel(lat, lam):
    def f(u, order=0):
        return ell.phi(u, lam, lat, order)
    return f


def _kernel_wronskian(x, y, lam, lat):
    F = _kernel(lat, lam)
    return [F(x) * F(y, 1), -F(y) * F(x, 1), -F(x + y) * (ell.wp(x, lat) - ell.wp(y, lat))]


def _kernel_product(x, y, lam, lat):
    F = _kernel(lat, lam)
    z = ell.zeta
    return [F(x) * F(y), -F(x + y) * z(x, lat), -F(x + y) * z(y, lat),
            F(x + y) * z(x + y + lam, lat), -F(x + y) * z(lam, lat)]


def _kernel_wronskian_opposite(x, y, lam, lat):
    F = _kernel(lat, lam)
    return [F(x) * F(-x, 1), -F(-x) * F(x, 1), -ell.wp(x, lat, 1)]


def _kernel_second_wronskian(x, y, lam, lat):
    F = _kernel(lat, lam)
    dwp = ell.wp(x, lat) - ell.wp(y, lat)
    dwp1 = ell.wp(x, lat, 1) - ell.wp(y, lat, 1)
    return [F(x) * F(y, 2), -F(y) * F(x, 2), -2 * F(x + y, 1) * dwp, -F(x + y) * dwp1]


def _kernel_mixed_wronskian(x, y, lam, lat):
    F = _kernel(lat, lam)
    dwp = ell.wp(x, lat) - ell.wp(y, lat)
    dwp1 = ell.wp(x, lat, 1) - ell.wp(y, lat, 1)
    return [F(x, 1) * F(y, 2), -F(y, 1) * F(x, 2), -F(x + y, 2) * dwp, -F(x + y, 1) * dwp1]


def _kernel_second_wronskian_opposite(x, y, lam, lat):
    F = _kernel(lat, lam)
    return [F(x) * F(-x, 2), -F(-x) * F(x, 2)]


def _kernel_mixed_wronskian_opposite(x, y, lam, lat):
    F = _kernel(lat, lam)
    return [F(x, 1) * F(-x, 2), -F(-x, 1) * F(x, 2), ell.wp(x, lat, 3) / 6,
            ell.wp(lam, lat) * ell.wp(x, lat, 1)]


def _kernel_norm(x, y, lam, lat):
    F = _kernel(lat, lam)
    return [F(x) * F(-x), -ell.wp(lam, lat), ell.wp(x, lat)]


def _kernel_derivative_norm(x, y, lam, lat):
    F = _kernel(lat, lam)
    return [F(x, 1) * F(-x), F(-x, 1) * F(x), -ell.wp(lam, lat, 1)]


def _kernel_derivative_square(x, y, lam, lat):
    F = _kernel(lat, lam)
    p, pl = ell.wp(x, lat), ell.wp(lam, lat)
    return [F(x, 1) * F(-x, 1), -p * p, -pl * p, -pl * pl, 0.25 * lat.g2 * np.ones_like(p)]


def _kernel_second_norm(x, y, lam, lat):
    F = _kernel(lat, lam)
    p, pl = ell.wp(x, lat), ell.wp(lam, lat)
    return [F(x) * F(-x, 2), -pl * pl, -pl * p, 2 * p * p]


def _kernel_mixed_norm(x, y, lam, lat):
    F = _kernel(lat, lam)
    p, pl = ell.wp(x, lat), ell.wp(lam, lat)
    p1, pl1 = ell.wp(x, lat, 1), ell.wp(lam, lat, 1)
    return [F(x, 1) * F(-x, 2), -pl1 * p, -0.5 * pl1 * pl, p1 * p, 0.5 * p1 * pl]


def _lame_equation(x, y, lam, lat):
    # Lame equation: Phi'' = Phi (2 wp(x) + wp(lam)); the sign of wp(lam) is
    # forced by kernel_second_norm and by velocity_commutator
    F = _kernel(lat, lam)
    return [F(x, 2), -2 * F(x) * ell.wp(x, lat), -F(x) * ell.wp(lam, lat)]


def lame_equation_wrong_sign(x, y, lam, lat):
    """Terms of ``Phi'' = Phi (2 wp(x) - wp(lam))``, which does not hold."""
    F = _kernel(lat, lam)
    return [F(x, 2), -2 * F(x) * ell.wp(x, lat), F(x) * ell.wp(lam, lat)]


def _zeta_symmetric_difference(x, y, lam, lat):
    z = ell.zeta
    rhs = ell.wp(lam, lat, 1) / (ell.wp(x, lat) - ell.wp(lam, lat))
    return [2 * z(lam, lat), -z(lam + x, lat), -z(lam - x, lat), -rhs]


def _wp_differential_equation(x, y, lam, lat):
    p, p1 = ell.wp(x, lat), ell.wp(x, lat, 1)
    return [p1 * p1, -4 * p ** 3, lat.g2 * p, lat.g3 * np.ones_like(p)]


def _wp_addition_difference(x, y, lam, lat):
    p, pl = ell.wp(x, lat), ell.wp(lam, lat)
    rhs = -ell.wp(lam, lat, 1) * ell.wp(x, lat, 1) / (p - pl) ** 2
    return [ell.wp(x + lam, lat), -ell.wp(x - lam, lat), -rhs]


def _wp_addition_sum(x, y, lam, lat):
    p, pl = ell.wp(x, lat), ell.wp(lam, lat)
    p1, pl1 = ell.wp(x, lat, 1), ell.wp(lam, lat, 1)
    frac = 0.5 * (p1 * p1 + pl1 * pl1) / (p - pl) ** 2
    return [ell.wp(x + lam, lat), ell.wp(x - lam, lat), -frac, 2 * p, 2 * pl]


def _zeta_addition(x, y, lam, lat):
    z = ell.zeta
    rhs = -0.5 * (ell.wp(x, lat, 1) + ell.wp(y, lat, 1)) / (ell.wp(x, lat) - ell.wp(y, lat))
    return [z(x, lat), -z(y, lat), -z(x - y, lat), -rhs]


def _wp_third_derivative(x, y, lam, lat):
    return [ell.wp(x, lat, 3), -12 * ell.wp(x, lat) * ell.wp(x, lat, 1)]


SCALAR_IDENTITIES: dict[str, Callable] = {
    "kernel_wronskian": _kernel_wronskian,
    "kernel_product": _kernel_product,
    "kernel_wronskian_opposite": _kernel_wronskian_opposite,
    "kernel_second_wronskian": _kernel_second_wronskian,
    "kernel_mixed_wronskian": _kernel_mixed_wronskian,
    "kernel_second_wronskian_opposite": _kernel_second_wronskian_opposite,
    "kernel_mixed_wronskian_opposite": _kernel_mixed_wronskian_opposite,
    "kernel_norm": _kernel_norm,
    "kernel_derivative_norm": _kernel_derivative_norm,
    "kernel_derivative_square": _kernel_derivative_square,
    "kernel_second_norm": _kernel_second_norm,
    "kernel_mixed_norm": _kernel_mixed_norm,
    "lame_equation": _lame_equation,
    "zeta_symmetric_difference": _zeta_symmetric_difference,
    "wp_differential_equation": _wp_differential_equation,
    "wp_addition_difference": _wp_addition_difference,
    "wp_addition_sum": _wp_addition_sum,
    "zeta_addition": _zeta_addition,
    "wp_third_derivative": _wp_third_derivative,
}


# matrix and many-point identities: f(pts, vel, lam, lat) -> residual

def _blocks(x, lam, lat):
    A = phi_matrix(x, lam, lat, 0)
    B = phi_matrix(x, lam, lat, 1)
    C = phi_matrix(x, lam, lat, 2)
    D = diag(wp_matrix(x, lat, 0).sum(axis=1))
    D1 = diag(wp_matrix(x, lat, 1).sum(axis=1))
    D3 = diag(wp_matrix(x, lat, 3).sum(axis=1))
    return A, B, C, D, D1, D3


def _commutator_ab_ad(x, v, lam, lat):
    A, B, C, D, D1, D3 = _blocks(x, lam, lat)
    return _matrix_residual([commutator(A, B), commutator(A, D), -D1])


def _commutator_ac(x, v, lam, lat):
    A, B, C, D, D1, D3 = _blocks(x, lam, lat)
    return _matrix_residual([commutator(A, C), -2 * commutator(D, B), -D1 @ A, -A @ D1])


def _commutator_bc(x, v, lam, lat):
    A, B, C, D, D1, D3 = _blocks(x, lam, lat)
    pl = ell.wp(lam, lat)
    return _matrix_residual([commutator(B, C), -commutator(D, C), -D1 @ B, -B @ D1, D3 / 6, pl * D1])


def _velocity_commutator(x, v, lam, lat):
    A, B, C, D, D1, D3 = _blocks(x, lam, lat)
    X = diag(v)
    Dt = diag(wp_matrix(x, lat, 0) @ v)
    Dt1 = diag(wp_matrix(x, lat, 1) @ v)
    pl = ell.wp(lam, lat)
    return _matrix_residual([B @ X @ A, -A @ X @ B, -commutator(A, Dt),
                             0.5 * commutator(X, C), -0.5 * pl * commutator(X, A), Dt1])


def _selfdual_cm_terms(x, y, lat, i):
    n = len(x)
    zxx = [sum(ell.zeta(x[a] - x[k], lat) for k in range(n) if k != a) for a in range(n)]
    zxy = [sum(ell.zeta(x[a] - y[k], lat) for k in range(n)) for a in range(n)]
    zyy = [sum(ell.zeta(y[a] - y[k], lat) for k in range(n) if k != a) for a in range(n)]
    zyx = [sum(ell.zeta(y[a] - x[k], lat) for k in range(n)) for a in range(n)]
    terms = []
    for j in range(n):
        if j != i:
            w = ell.wp(x[i] - x[j], lat)
            terms += [-zxx[i] * w, zxy[i] * w, zxx[j] * w, -zxy[j] * w]
            terms.append(-ell.wp(x[i] - x[j], lat, 1))
        w = ell.wp(x[i] - y[j], lat)
        terms += [zxx[i] * w, -zxy[i] * w, zyy[j] * w, -zyx[j] * w]
    return terms


def _selfdual_cm(x, v, lam, lat):
    n = len(x) // 2
    xs, ys = x[:n], x[n:]
    return max(float(relative_residual(_selfdual_cm_terms(xs, ys, lat, i))) for i in range(n))


def _wp_product_divergence(x, v, lam, lat):
    n = len(x)
    P = wp_matrix(x, lat, 0)
    P1 = wp_matrix(x, lat, 1)
    terms = []
    for i in range(n):
        for m in range(n):
            if m == i:
                continue
            prod = P1[i, m]
            for k in range(n):
                if k not in (i, m):
                    prod = prod * P[i, k]
            terms.append(prod)
    return float(relative_residual(terms))


# name -> (function, number of points)
MATRIX_IDENTITIES: dict[str, tuple[Callable, int]] = {
    "commutator_ab_ad": (_commutator_ab_ad, 4),
    "commutator_ac": (_commutator_ac, 4),
    "commutator_bc": (_commutator_bc, 4),
    "velocity_commutator": (_velocity_commutator, 4),
    "selfdual_cm_n2": (_selfdual_cm, 4),
    "selfdual_cm_n3": (_selfdual_cm, 6),
    "selfdual_cm_n4": (_selfdual_cm, 8),
    "wp_product_divergence_n2": (_wp_product_divergence, 2),
    "wp_product_divergence_n3": (_wp_product_divergence, 3),
    "wp_product_divergence_n4": (_wp_product_divergence, 4),
}


def _sample_points(rng, lat, n, lam, min_dist):
    while True:
        ab = rng.uniform(-0.5, 0.5, size=(2, n))
        pts = lat.point(ab[0], ab[1])
        d = differences(pts)[~np.eye(n, dtype=bool)]
        if min_reduced_distance(d, lat) < min_dist * lat.pole_scale:
            continue
        if min_reduced_distance(d + lam, lat) < min_dist * lat.pole_scale:
            continue
        return pts


def random_lattice(rng: np.random.Generator) -> Lattice:
    """A lattice with ``omega = 1/2`` and ``tau`` drawn from a moderate region of the upper half plane."""
    tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.9, 1.6))
    return Lattice(0.5, 0.5 * tau)


def identity_suite(lattices=None, trials: int = 100, seed: int = 0, min_dist: float = _MIN_DIST) -> dict:
    """Run every identity on ``trials`` random arguments per lattice.

    ``lattices`` defaults to the square lattice plus one random lattice
    drawn from ``seed``.  Returns ``{name: max relative residual}`` over all
    lattices, plus the wall time under the key ``"_seconds"``.
    """
    rng = np.random.default_rng(seed)
    if lattices is None:
        lattices = [ell.square_lattice(), random_lattice(rng)]
    start = time.perf_counter()
    out: dict[str, float] = {}
    for lat in lattices:
        x, y, lam = sample_arguments(rng, lat, trials, min_dist)
        for name, fn in SCALAR_IDENTITIES.items():
            r = float(np.max(relative_residual(fn(x, y, lam, lat))))
            out[name] = max(out.get(name, 0.0), r)
        for name, (fn, npts) in MATRIX_IDENTITIES.items():
            worst = 0.0
            for t in range(trials):
                pts = _sample_points(rng, lat, npts, lam[t], min_dist)
                vel = rng.normal(size=npts) + 1j * rng.normal(size=npts)
                worst = max(worst, fn(pts, vel, lam[t], lat))
            out[name] = max(out.get(name, 0.0), worst)
    out["_seconds"] = time.perf_counter() - start
    return out
