"""BKP pole dynamics (three-body interaction) and the Novikov-Veselov pole system.

The BKP time is t3; the ``c = 0`` normalization of the quadratic form is
used throughout.  For the Novikov-Veselov system the dot means the
derivative in ``xbar``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import elliptic as ell
from . import pairwise as pw
from .elliptic import Lattice
from .errors import SingularSystemError, ZeroVelocityError
from .linalg import PolyInZ, charpoly_in_z, commutator, determinant

NV_COND_MAX = 1e10


@dataclass(frozen=True)
class BKPState:
    t: float
    x: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class NVParams:
    lattice: Lattice
    gamma: complex = 0.0


@dataclass(frozen=True)
class NVState:
    xbar: float
    x: np.ndarray
    v: np.ndarray


def bkp_state(x, v, t: float = 0.0) -> BKPState:
    return BKPState(t, np.asarray(x, dtype=complex), np.asarray(v, dtype=complex))


def nv_state(x, v, xbar: float = 0.0) -> NVState:
    return NVState(xbar, np.asarray(x, dtype=complex), np.asarray(v, dtype=complex))


def _sums(x, lat):
    W = pw.wp_matrix(x, lat, 0)
    W1 = pw.wp_matrix(x, lat, 1)
    return W, W1


def build_lax_bkp(s: BKPState, lat: Lattice, z, lam, gauged: bool = False):
    """``(L, M)`` of the BKP linear problems ``L c = 3(z^2 - wp(lam)) c``, ``c_t = M c``.

    ``gauged`` conjugates both matrices by ``diag(exp(-zeta(lam) x_i))``,
    which leaves determinants unchanged and removes the essential
    singularity at ``lam = 0``.
    """
    pw.check_distinct(s.x, lat)
    A = pw.phi_matrix(s.x, lam, lat, 0, gauged)
    B = pw.phi_matrix(s.x, lam, lat, 1, gauged)
    C = pw.phi_matrix(s.x, lam, lat, 2, gauged)
    W, W1 = _sums(s.x, lat)
    D = np.diag(W.sum(axis=1))
    D1 = np.diag(W1.sum(axis=1))
    n = len(s.x)
    L = -np.diag(s.v) - 6 * z * A - 6 * B + 6 * D
    M = ((3 * z * ell.wp(lam, lat) + 2 * ell.wp(lam, lat, 1)) * np.eye(n)
         - 6 * z * B - 6 * z * D - 6 * C + 6 * D1)
    return L, M


def accel_bkp(s: BKPState, lat: Lattice, unsimplified: bool = False) -> np.ndarray:
    """Right-hand side of the BKP pole equations.

    The default form sums the three-body term over ``j != k``; with
    ``unsimplified`` the ``j = k`` terms are kept together with the
    ``-6 sum wp'''`` term they cancel against.
    """
    pw.check_distinct(s.x, lat)
    W, W1 = _sums(s.x, lat)
    v = s.v
    pair = -6 * np.sum((v[:, None] + v[None, :]) * W1, axis=1)
    full = 72 * W.sum(axis=1) * W1.sum(axis=1)
    if unsimplified:
        W3 = pw.wp_matrix(s.x, lat, 3)
        return pair + full - 6 * W3.sum(axis=1)
    return pair + full - 72 * np.sum(W * W1, axis=1)


def lax_dot_bkp(s: BKPState, lat: Lattice, acc, z, lam) -> np.ndarray:
    x, v = s.x, s.v
    dv = v[:, None] - v[None, :]
    B = pw.phi_matrix(x, lam, lat, 1)
    C = pw.phi_matrix(x, lam, lat, 2)
    W1 = pw.wp_matrix(x, lat, 1)
    Ddot = np.diag(np.sum(dv * W1, axis=1))
    return -np.diag(acc) - 6 * z * dv * B - 6 * dv * C + 6 * Ddot


def manakov_residual(s: BKPState, lat: Lattice, z, lam, acc=None) -> np.ndarray:
    """``dL/dt + [L, M] + 12 D' (L - Lambda I)`` with ``Lambda = 3(z^2 - wp(lam))``."""
    acc = accel_bkp(s, lat) if acc is None else np.asarray(acc, dtype=complex)
    L, M = build_lax_bkp(s, lat, z, lam)
    D1 = np.diag(pw.wp_matrix(s.x, lat, 1).sum(axis=1))
    n = len(s.x)
    Lam = 3 * (z ** 2 - ell.wp(lam, lat))
    return lax_dot_bkp(s, lat, acc, z, lam) + commutator(L, M) + 12 * D1 @ (L - Lam * np.eye(n))


def intermediate_residual(s: BKPState, lat: Lattice, z, lam, acc) -> np.ndarray:
    """Matrix identity preceding the Manakov form; zero for any accelerations."""
    acc = np.asarray(acc, dtype=complex)
    L, M = build_lax_bkp(s, lat, z, lam)
    W, W1 = _sums(s.x, lat)
    D = np.diag(W.sum(axis=1))
    D1 = np.diag(W1.sum(axis=1))
    D3 = np.diag(pw.wp_matrix(s.x, lat, 3).sum(axis=1))
    dv = s.v[:, None] - s.v[None, :]
    Ddot = np.diag(np.sum(dv * W1, axis=1))
    n = len(s.x)
    Lam = 3 * (z ** 2 - ell.wp(lam, lat))
    Xd = np.diag(s.v)
    return (lax_dot_bkp(s, lat, acc, z, lam) + commutator(L, M) + 12 * D1 @ (L - Lam * np.eye(n))
            + np.diag(acc) - 12 * D1 @ (6 * D - Xd) - 6 * Ddot + 6 * D3)


def integrals_bkp(s: BKPState, lat: Lattice) -> dict:
    """``I1``, ``I2``, ``J`` for any N and ``I3`` for N = 3."""
    pw.check_distinct(s.x, lat)
    v = s.v
    W = pw.wp_matrix(s.x, lat, 0)
    rows = W.sum(axis=1)
    # sum over ordered triples of distinct indices of W_ij W_ik
    triple = np.sum(rows ** 2 - np.sum(W ** 2, axis=1))
    out = {
        "I1": complex(v.sum()),
        "I2": complex(0.5 * np.sum(v ** 2) + 6 * np.sum(v * rows) - 18 * triple),
        "J": determinant(np.diag(v) - 6 * np.diag(rows) - 6 * W),
    }
    if len(v) == 3:
        w12, w13, w23 = W[0, 1], W[0, 2], W[1, 2]
        out["I3"] = complex(np.sum(v ** 3) / 3 + 6 * np.sum(v ** 2 * rows)
                            + 12 * (v[0] * v[1] * w12 + v[0] * v[2] * w13 + v[1] * v[2] * w23)
                            - 864 * w12 * w13 * w23)
    return out


def curve_matrix_bkp(s: BKPState, lat: Lattice, z, lam, gauged: bool = False) -> np.ndarray:
    L, _ = build_lax_bkp(s, lat, z, lam, gauged)
    return 3 * (z ** 2 - ell.wp(lam, lat)) * np.eye(len(s.x)) - L


def spectral_curve_bkp(s: BKPState, lat: Lattice, lam, radius: float | None = None) -> PolyInZ:
    """Coefficients in ``z`` of ``det(3(z^2 - wp(lam)) I - L(z, lam))``, degree 2N."""
    if radius is None:
        radius = max(1.5, float(np.sqrt(abs(ell.wp(lam, lat)))))
    return charpoly_in_z(lambda z: curve_matrix_bkp(s, lat, z, lam, gauged=True),
                         2 * len(s.x), radius=radius)


def curve_value_bkp(s: BKPState, lat: Lattice, z, lam) -> complex:
    """``R(z, lam)`` evaluated directly (gauged kernel, so small ``lam`` is safe)."""
    return determinant(curve_matrix_bkp(s, lat, z, lam, gauged=True))


def j_integral_limit(s: BKPState, lat: Lattice, lam: complex = 1e-3) -> complex:
    """``R(1/lam, lam)``, which tends to ``J`` as ``lam -> 0``."""
    return curve_value_bkp(s, lat, 1 / lam, lam)


def spectral_curve_bkp_closed_form(s: BKPState, lat: Lattice, lam) -> np.ndarray:
    """Closed-form coefficients for N = 2 and N = 3 (lowest degree first)."""
    wl, wl1 = ell.wp(lam, lat), ell.wp(lam, lat, 1)
    g2, g3 = lat.g2, lat.g3
    v = s.v
    ints = integrals_bkp(s, lat)
    I1, I2 = ints["I1"], ints["I2"]
    if len(v) == 2:
        w12 = ell.wp(s.x[0] - s.x[1], lat)
        c0 = -3 * wl * I1 + v[0] * v[1] - 6 * I1 * w12 - 27 * wl ** 2 + 9 * g2
        return np.array([c0, -36 * wl1, 3 * (I1 - 18 * wl), 0, 9])
    if len(v) == 3:
        I3 = ints["I3"]
        c0 = (I3 - I1 * I2 + I1 ** 3 / 6 + 3 * wl * (I2 - I1 ** 2 / 2) - 27 * wl ** 2 * I1
              + 9 * g2 * I1 - 135 * wl ** 3 - 27 * g2 * wl + 216 * g3)
        c1 = -36 * wl1 * (I1 + 9 * wl)
        c2 = 1.5 * I1 ** 2 - 3 * I2 - 54 * wl * I1 - 1215 * wl ** 2 + 243 * g2
        return np.array([c0, c1, c2, -540 * wl1, 9 * (I1 - 45 * wl), 0, 27])
    raise ValueError("closed forms exist for N = 2 and N = 3 only")


def rational_accel_bkp(x, v) -> np.ndarray:
    """Rational degeneration ``wp(x) -> 1/x^2`` of :func:`accel_bkp`."""
    x = np.asarray(x, dtype=complex)
    v = np.asarray(v, dtype=complex)
    n = len(x)
    d = pw.differences(x)
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.min(np.abs(d[off])) == 0:
        raise pw.CollisionError("coinciding positions")
    inv = np.zeros((n, n), dtype=complex)
    inv[off] = 1 / d[off]
    pair = 12 * np.sum((v[:, None] + v[None, :]) * inv ** 3, axis=1)
    three = (inv ** 2).sum(axis=1) * (inv ** 3).sum(axis=1) - np.sum(inv ** 5, axis=1)
    return pair - 144 * three


def selfdual_rhs_bkp(x, y, mu, lat: Lattice):
    """First-order (poles, zeros) system whose x-projection solves the BKP equations."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    pw.check_distinct(x, lat)
    pw.check_distinct(y, lat)
    pw.check_cross(x, y, lat)
    Zxy = pw.cross(lambda d: ell.zeta(d, lat), x, y)
    Wxy = pw.cross(lambda d: ell.wp(d, lat), x, y)
    sx = pw.zeta_matrix(x, lat).sum(axis=1) - Zxy.sum(axis=1)
    sy = pw.zeta_matrix(y, lat).sum(axis=1) + Zxy.sum(axis=0)
    xdot = (3 * pw.wp_matrix(x, lat).sum(axis=1) + 3 * Wxy.sum(axis=1)
            - 3 * sx ** 2 + 6 * mu * sx - 3 * mu ** 2)
    ydot = (3 * pw.wp_matrix(y, lat).sum(axis=1) + 3 * Wxy.sum(axis=0)
            - 3 * sy ** 2 - 6 * mu * sy - 3 * mu ** 2)
    return xdot, ydot


# --- Novikov-Veselov -------------------------------------------------------

def _check_velocities(v):
    if np.any(np.abs(v) == 0):
        raise ZeroVelocityError("all velocities must be nonzero")


def nv_system(s: NVState, p: NVParams, z, lam):
    """``(L, Mhat)`` of the Novikov-Veselov linear problems."""
    if z == 0:
        raise ValueError("z must be nonzero")
    _check_velocities(s.v)
    lat = p.lattice
    pw.check_distinct(s.x, lat)
    n = len(s.x)
    A = pw.phi_matrix(s.x, lam, lat, 0)
    B = pw.phi_matrix(s.x, lam, lat, 1)
    W = pw.wp_matrix(s.x, lat)
    Dcal = np.diag(W @ s.v)
    Xd = np.diag(s.v)
    L = -6 * np.diag(1 / s.v) @ (Dcal + p.gamma * np.eye(n)) - 6 * z * A - 6 * B
    Mh = -np.eye(n) / z + z * Xd + 2 * Xd @ A
    return L, Mh


def nv_matrix(s: NVState, p: NVParams):
    """Coefficient matrix ``K`` and right side ``f`` of ``K xddot = f``.

    Row ``i`` is the compatibility condition of the two linear problems:
    ``sum_j (v_i a_j - a_i v_j) wp(x_ij) - gamma a_i = sum_j v_i v_j (v_i + v_j) wp'(x_ij)``.
    """
    v = s.v
    W = pw.wp_matrix(s.x, p.lattice)
    W1 = pw.wp_matrix(s.x, p.lattice, 1)
    K = v[:, None] * W - np.diag(W @ v) - p.gamma * np.eye(len(v))
    f = np.sum(v[:, None] * v[None, :] * (v[:, None] + v[None, :]) * W1, axis=1)
    return K, f


def nv_equation_residual(s: NVState, p: NVParams, acc) -> np.ndarray:
    K, f = nv_matrix(s, p)
    return K @ np.asarray(acc, dtype=complex) - f


def nv_accel(s: NVState, p: NVParams, return_info: bool = False):
    """Accelerations solving the Novikov-Veselov pole equations.

    For ``gamma = 0`` the coefficient matrix annihilates the velocity
    vector (the equations are then invariant under
    ``xddot -> xddot + a * xdot``), so the row ``sum_i xddot_i = 0`` is
    appended to fix this freedom and the augmented system is solved by
    least squares.  For ``gamma != 0`` the square system is solved
    directly.  Either way the condition number is checked and returned
    with ``return_info``.
    """
    n = len(s.x)
    if n == 1 and p.gamma == 0:
        acc = np.zeros(1, dtype=complex)
        return (acc, {"cond": 1.0, "residual": 0.0}) if return_info else acc
    _check_velocities(s.v)
    pw.check_distinct(s.x, p.lattice)
    K, f = nv_matrix(s, p)
    if p.gamma == 0:
        Ka = np.vstack([K, np.ones((1, n))])
        fa = np.concatenate([f, [0.0]])
    else:
        Ka, fa = K, f
    cond = float(np.linalg.cond(Ka))
    if not np.isfinite(cond) or cond > NV_COND_MAX:
        raise SingularSystemError(f"Novikov-Veselov system condition number {cond:.3g}")
    if p.gamma == 0:
        acc = np.linalg.lstsq(Ka, fa, rcond=None)[0]
    else:
        acc = np.linalg.solve(Ka, fa)
    if return_info:
        res = float(np.max(np.abs(K @ acc - f)))
        return acc, {"cond": cond, "residual": res}
    return acc


def nv_lax_dot(s: NVState, p: NVParams, acc, z, lam) -> np.ndarray:
    lat = p.lattice
    x, v = s.x, s.v
    acc = np.asarray(acc, dtype=complex)
    n = len(x)
    dv = v[:, None] - v[None, :]
    B = pw.phi_matrix(x, lam, lat, 1)
    C = pw.phi_matrix(x, lam, lat, 2)
    W = pw.wp_matrix(x, lat)
    W1 = pw.wp_matrix(x, lat, 1)
    Dcal = np.diag(W @ v) + p.gamma * np.eye(n)
    Dcal_dot = np.diag(W @ acc + np.sum(v[None, :] * dv * W1, axis=1))
    inv = np.diag(1 / v)
    return (6 * inv @ inv @ np.diag(acc) @ Dcal - 6 * inv @ Dcal_dot
            - 6 * z * dv * B - 6 * dv * C)


def nv_manakov_residual(s: NVState, p: NVParams, z, lam, acc=None) -> np.ndarray:
    """``dL/dt + [L, Mhat] - 2 [A, Xdot] (L - Lambda I)``."""
    acc = nv_accel(s, p) if acc is None else np.asarray(acc, dtype=complex)
    lat = p.lattice
    L, Mh = nv_system(s, p, z, lam)
    A = pw.phi_matrix(s.x, lam, lat, 0)
    n = len(s.x)
    Lam = 3 * (z ** 2 - ell.wp(lam, lat))
    P = 2 * commutator(A, np.diag(s.v))
    return nv_lax_dot(s, p, acc, z, lam) + commutator(L, Mh) - P @ (L - Lam * np.eye(n))


def nv_curve_value(s: NVState, p: NVParams, z, lam) -> complex:
    """``det(L - 3 (z^2 - wp(lam)) I)`` of the Novikov-Veselov Lax matrix."""
    L, _ = nv_system(s, p, z, lam)
    Lam = 3 * (z ** 2 - ell.wp(lam, p.lattice))
    return determinant(L - Lam * np.eye(len(s.x)))


def nv_t3_velocity(s: NVState, p: NVParams) -> np.ndarray:
    """t3-velocities implied by equating the diagonals of the BKP and NV Lax matrices."""
    _check_velocities(s.v)
    W = pw.wp_matrix(s.x, p.lattice)
    return (6 * np.sum((s.v[:, None] + s.v[None, :]) * W, axis=1) + 6 * p.gamma) / s.v


def rational_nv_accel(x, v) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    v = np.asarray(v, dtype=complex)
    n = len(x)
    d = pw.differences(x)
    inv = np.zeros((n, n), dtype=complex)
    off = ~np.eye(n, dtype=bool)
    inv[off] = 1 / d[off]
    return 2 * v * (inv @ v)


# --- flat state helpers ----------------------------------------------------

def bkp_rhs(lat: Lattice):
    def rhs(y):
        n = len(y) // 2
        x, v = y[:n], y[n:]
        return np.concatenate([v, accel_bkp(BKPState(0.0, x, v), lat)])
    return rhs


def nv_rhs(p: NVParams):
    def rhs(y):
        n = len(y) // 2
        x, v = y[:n], y[n:]
        return np.concatenate([v, nv_accel(NVState(0.0, x, v), p)])
    return rhs
