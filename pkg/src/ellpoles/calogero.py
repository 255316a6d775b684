"""Elliptic Calogero-Moser system as pole dynamics of elliptic KP solutions.

Conventions: the state stores positions ``x`` and t2-velocities ``v``;
momenta are ``p = v / 2``.  The coupling constant is ``4*hbar**2``.
Matrix names follow the usual notation of the pole-dynamics literature:
``A``, ``B``, ``C`` are off-diagonal with entries ``Phi``, ``Phi'``,
``Phi''`` of ``x_i - x_j``; ``D``, ``D'`` are diagonal with the sums of
``wp`` and ``wp'`` over the other particles.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from . import elliptic as ell
from . import pairwise as pw
from .elliptic import Lattice
from .errors import ConvergenceError, NotOnCurveError, SingularSystemError
from .linalg import PolyInZ, charpoly_in_z, commutator

DEFAULT_LAMBDA = 0.37 + 0.21j


@dataclass(frozen=True)
class CMParams:
    n_particles: int
    lattice: Lattice
    hbar: complex = 1.0
    c_quad: complex = 0.0
    b_quad: complex = 0.0
    lambda_default: complex = DEFAULT_LAMBDA

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("need at least one particle")


@dataclass(frozen=True)
class CMState:
    t: float
    x: np.ndarray
    v: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.v) / 2

    def with_v(self, v) -> "CMState":
        return replace(self, v=np.asarray(v, dtype=complex))


def make_state(x, v, t: float = 0.0) -> CMState:
    x = np.asarray(x, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if x.shape != v.shape or x.ndim != 1:
        raise ValueError("positions and velocities must be 1-d arrays of equal length")
    return CMState(t, x, v)


def _lam(p: CMParams, lam):
    return p.lambda_default if lam is None else lam


def blocks(x, lam, lat: Lattice) -> dict:
    """The building blocks A, B, C, D, D', D'' at positions ``x``."""
    pw.check_distinct(x, lat)
    return {
        "A": pw.phi_matrix(x, lam, lat, 0),
        "B": pw.phi_matrix(x, lam, lat, 1),
        "C": pw.phi_matrix(x, lam, lat, 2),
        "D": np.diag(pw.wp_matrix(x, lat, 0).sum(axis=1)),
        "D1": np.diag(pw.wp_matrix(x, lat, 1).sum(axis=1)),
    }


def build_lax_t2(s: CMState, p: CMParams, z=None, lam=None):
    """Lax pair ``(L, M)`` of the t2 flow with coupling ``4*hbar**2``.

    The matrices do not depend on ``z``; the argument is accepted for a
    uniform signature with the other systems.
    """
    lam = _lam(p, lam)
    lat, h = p.lattice, p.hbar
    bl = blocks(s.x, lam, lat)
    n = len(s.x)
    eye = np.eye(n)
    L = -np.diag(s.v) - 2 * h * bl["A"]
    M = (h * ell.wp(lam, lat) + 4 * p.c_quad / h) * eye - 2 * h * bl["B"] - 2 * h * bl["D"]
    return L, M


def accel_t2(s: CMState, p: CMParams) -> np.ndarray:
    pw.check_distinct(s.x, p.lattice)
    return 4 * p.hbar ** 2 * pw.wp_matrix(s.x, p.lattice, 1).sum(axis=1)


def lax_dot(s: CMState, p: CMParams, acc, lam=None) -> np.ndarray:
    """dL/dt assembled from velocities and the supplied accelerations."""
    lam = _lam(p, lam)
    B = pw.phi_matrix(s.x, lam, p.lattice, 1)
    return -np.diag(acc) - 2 * p.hbar * commutator(np.diag(s.v), B)


def lax_identity_residual(s: CMState, p: CMParams, z=None, lam=None, acc=None) -> np.ndarray:
    """``dL/dt - [M, L] + Xddot - 4 hbar^2 D'``; the zero matrix identically.

    ``acc`` defaults to :func:`accel_t2`.  The combination is independent of
    the accelerations, so it tests the matrix identities behind the Lax
    representation; :func:`lax_equation_residual` is the version that
    detects wrong accelerations.
    """
    lam = _lam(p, lam)
    acc = accel_t2(s, p) if acc is None else np.asarray(acc, dtype=complex)
    L, M = build_lax_t2(s, p, z, lam)
    d1 = pw.wp_matrix(s.x, p.lattice, 1).sum(axis=1)
    return lax_dot(s, p, acc, lam) - commutator(M, L) + np.diag(acc) - 4 * p.hbar ** 2 * np.diag(d1)


def lax_equation_residual(s: CMState, p: CMParams, acc, lam=None) -> np.ndarray:
    """``dL/dt - [M, L]`` for given accelerations; zero iff they solve the flow."""
    lam = _lam(p, lam)
    L, M = build_lax_t2(s, p, None, lam)
    return lax_dot(s, p, np.asarray(acc, dtype=complex), lam) - commutator(M, L)


def hamiltonians(s: CMState, p: CMParams, lam=None, trace_forms: bool = False):
    """``(H1, H2, H3)`` in the momentum form.

    With ``trace_forms=True`` also returns the same three quantities built
    from traces of the Lax matrix at ``lam``.
    """
    lat, h = p.lattice, p.hbar
    mom = s.p
    W = pw.wp_matrix(s.x, lat, 0)
    pw.check_distinct(s.x, lat)
    h1 = -mom.sum()
    h2 = np.sum(mom ** 2) - h ** 2 * W.sum()
    h3 = -np.sum(mom ** 3) + 3 * h ** 2 * np.sum(mom[:, None] * W)
    direct = (complex(h1), complex(h2), complex(h3))
    if not trace_forms:
        return direct
    lam = _lam(p, lam)
    n = len(s.x)
    L, _ = build_lax_t2(s, p, None, lam)
    L2 = L @ L
    trL, trL2, trL3 = np.trace(L), np.trace(L2), np.trace(L2 @ L)
    wl, wl1 = ell.wp(lam, lat), ell.wp(lam, lat, 1)
    t1 = trL / 2
    t2 = trL2 / 4 - h ** 2 * n * (n - 1) * wl
    t3 = (trL3 / 8 - 1.5 * h ** 2 * (n - 1) * wl * trL
          - 0.5 * h ** 3 * n * (n - 1) * (n - 2) * wl1)
    return direct, (complex(t1), complex(t2), complex(t3))


def _require_unit_hbar(p: CMParams):
    if p.hbar != 1:
        raise ValueError("the t3 flow is implemented for hbar = 1 only")


def flow_t3(s: CMState, p: CMParams):
    """t3-derivatives of positions and of the t2-velocities."""
    _require_unit_hbar(p)
    lat = p.lattice
    pw.check_distinct(s.x, lat)
    W = pw.wp_matrix(s.x, lat, 0)
    W1 = pw.wp_matrix(s.x, lat, 1)
    v = s.v
    dx = -6 * p.c_quad - 0.75 * v ** 2 + 3 * W.sum(axis=1)
    dv = -3 * np.sum((v[:, None] + v[None, :]) * W1, axis=1)
    return dx, dv


def h3_tilde(s: CMState, p: CMParams) -> complex:
    h1, _, h3 = hamiltonians(s, p)
    return h3 + 6 * p.c_quad * h1


def build_T(s: CMState, p: CMParams, z=None, lam=None) -> np.ndarray:
    """The matrix ``T`` of the t3 linear problem ``d_t3 c = T c``."""
    _require_unit_hbar(p)
    lam = _lam(p, lam)
    lat = p.lattice
    bl = blocks(s.x, lam, lat)
    L, M = build_lax_t2(s, p, z, lam)
    Xd = np.diag(s.v)
    W = pw.wp_matrix(s.x, lat, 0)
    Dt = np.diag(W @ s.v)
    wl, wl1 = ell.wp(lam, lat), ell.wp(lam, lat, 1)
    n = len(s.x)
    return (0.75 * M @ L - 1.5 * bl["C"] + 1.5 * Xd @ bl["B"] + 1.5 * bl["D1"]
            + 1.5 * Dt - 0.75 * wl * Xd + 0.5 * (wl1 + 3 * p.b_quad) * np.eye(n))


def t3_compatibility(s: CMState, p: CMParams, lam=None, dv3=None) -> np.ndarray:
    """``d_t3 L + [L, T]`` with ``d_t3 x`` from :func:`flow_t3`.

    ``dv3`` is the t3-derivative of the velocities used in ``d_t3 L``; it
    defaults to zero so that the diagonal of the result exposes the
    equations of motion.
    """
    lam = _lam(p, lam)
    dx3, _ = flow_t3(s, p)
    dv3 = np.zeros_like(s.v) if dv3 is None else np.asarray(dv3, dtype=complex)
    B = pw.phi_matrix(s.x, lam, p.lattice, 1)
    dA = (dx3[:, None] - dx3[None, :]) * B
    dL = -np.diag(dv3) - 2 * dA
    L, _ = build_lax_t2(s, p, None, lam)
    return dL + commutator(L, build_T(s, p, None, lam))


def spectral_curve(s: CMState, p: CMParams, lam=None) -> PolyInZ:
    """Coefficients in ``z`` of ``det(2 z I - L)``."""
    lam = _lam(p, lam)
    L, _ = build_lax_t2(s, p, None, lam)
    n = len(s.x)
    eye = np.eye(n)
    radius = max(1.0, float(np.max(np.abs(L))) / 2)
    return charpoly_in_z(lambda z: 2 * z * eye - L, n, radius=radius)


def spectral_curve_closed_form(s: CMState, p: CMParams, lam=None) -> np.ndarray:
    """Closed-form coefficients (lowest degree first) for N = 2 and N = 3, hbar = 1."""
    lam = _lam(p, lam)
    lat = p.lattice
    v, x = s.v, s.x
    wl = ell.wp(lam, lat)
    if len(x) == 2:
        return np.array([v[0] * v[1] + 4 * ell.wp(x[0] - x[1], lat) - 4 * wl,
                         2 * (v[0] + v[1]), 4])
    if len(x) == 3:
        w12, w13, w23 = (ell.wp(x[0] - x[1], lat), ell.wp(x[0] - x[2], lat),
                         ell.wp(x[1] - x[2], lat))
        c0 = (v[0] * v[1] * v[2] + 4 * v[0] * w23 + 4 * v[1] * w13 + 4 * v[2] * w12
              - 4 * wl * v.sum() - 8 * ell.wp(lam, lat, 1))
        c1 = 2 * (v[0] * v[1] + v[0] * v[2] + v[1] * v[2] + 4 * (w12 + w13 + w23) - 12 * wl)
        return np.array([c0, c1, 4 * v.sum(), 8])
    raise ValueError("closed forms exist for N = 2 and N = 3 only")


# --- self-dual form -------------------------------------------------------

def selfdual_rhs(x, y, mu, lat: Lattice):
    """First-order velocities of the doubled (poles, zeros) system."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    pw.check_distinct(x, lat)
    pw.check_distinct(y, lat)
    pw.check_cross(x, y, lat)
    Zxy = pw.cross(lambda d: ell.zeta(d, lat), x, y)
    xdot = 2 * pw.zeta_matrix(x, lat).sum(axis=1) - 2 * Zxy.sum(axis=1) + mu
    ydot = -2 * pw.zeta_matrix(y, lat).sum(axis=1) + 2 * (-Zxy).sum(axis=0) + mu
    return xdot, ydot


def selfdual_accel(x, y, mu, lat: Lattice) -> np.ndarray:
    """``d^2 x / dt^2`` along the self-dual flow, by the chain rule."""
    xdot, ydot = selfdual_rhs(x, y, mu, lat)
    W = pw.wp_matrix(x, lat)
    Wxy = pw.cross(lambda d: ell.wp(d, lat), x, y)
    return (-2 * np.sum((xdot[:, None] - xdot[None, :]) * W, axis=1)
            + 2 * np.sum((xdot[:, None] - ydot[None, :]) * Wxy, axis=1))


# --- discrete time --------------------------------------------------------

def discrete_cm_residual(x_prev, x_cur, x_next, lat: Lattice) -> np.ndarray:
    x_prev, x_cur, x_next = (np.asarray(a, dtype=complex) for a in (x_prev, x_cur, x_next))
    zn = pw.cross(lambda d: ell.zeta(d, lat), x_cur, x_next).sum(axis=1)
    zp = pw.cross(lambda d: ell.zeta(d, lat), x_cur, x_prev).sum(axis=1)
    return zn + zp - 2 * pw.zeta_matrix(x_cur, lat).sum(axis=1)


def newton(fun, jac, y0, tol: float = 1e-10, max_iter: int = 50, cond_max: float = 1e14):
    """Plain Newton iteration on a complex system; returns (root, residual norm, iterations)."""
    y = np.asarray(y0, dtype=complex).copy()
    for it in range(max_iter + 1):
        r = fun(y)
        res = float(np.max(np.abs(r)))
        if res <= tol:
            return y, res, it
        if it == max_iter:
            break
        J = jac(y)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > cond_max:
            raise SingularSystemError("Newton Jacobian is singular")
        y = y - np.linalg.solve(J, r)
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (residual {res:.3g})")


def discrete_cm_step(x_prev, x_cur, guess=None, lat: Lattice | None = None,
                     tol: float = 1e-10, max_iter: int = 50):
    """Solve the three-slice discrete CM equations for the next slice."""
    if lat is None:
        raise ValueError("a lattice is required")
    x_prev = np.asarray(x_prev, dtype=complex)
    x_cur = np.asarray(x_cur, dtype=complex)
    pw.check_distinct(x_prev, lat)
    pw.check_distinct(x_cur, lat)
    if guess is None:
        guess = 2 * x_cur - x_prev

    def fun(y):
        return discrete_cm_residual(x_prev, x_cur, y, lat)

    def jac(y):
        # d/dy_j zeta(x_i - y_j) = wp(x_i - y_j)
        return pw.cross(lambda d: ell.wp(d, lat), x_cur, y)

    root, _, _ = newton(fun, jac, guess, tol, max_iter)
    return root


# --- wave function --------------------------------------------------------

def null_vector(K: np.ndarray, iterations: int = 3) -> np.ndarray:
    """Approximate null vector of ``K`` by inverse iteration, normalized ``c_1 = 1``."""
    n = K.shape[0]
    scale = max(float(np.max(np.abs(K))), 1.0)
    lu = scipy.linalg.lu_factor(K + 1e-14 * scale * np.eye(n), check_finite=False)
    c = np.ones(n, dtype=complex)
    for _ in range(iterations):
        c = scipy.linalg.lu_solve(lu, c, check_finite=False)
        c = c / np.max(np.abs(c))
    if not np.all(np.isfinite(c)):
        c = np.linalg.svd(K)[2][-1].conj()
    if abs(c[0]) < 1e-12:
        return c / c[np.argmax(np.abs(c))]
    return c / c[0]


def _check_on_curve(K: np.ndarray, tol: float = 1e-8):
    scale = max(float(np.max(np.abs(K))), 1.0) ** K.shape[0]
    d = np.linalg.det(K)
    if abs(d) > tol * scale:
        raise NotOnCurveError(f"|det| = {abs(d):.3g} exceeds {tol:g} * {scale:.3g}")


def wave_residual_t2(s: CMState, p: CMParams, z, lam=None, x_eval=0.0, relative: bool = True,
                     v_dyn=None) -> complex:
    """Residual of ``hbar psi_t = hbar^2 psi_xx + 2 hbar^2 u psi`` for the pole ansatz.

    ``psi = exp((x z + t z^2)/hbar) sum_i c_i Phi(x - x_i)`` with ``L c = 2 z c``,
    ``c_t = M c`` and ``u = 2 c_quad / hbar^2 - sum_i wp(x - x_i)``.  With
    ``relative`` the residual is divided by the sum of the magnitudes of the
    three terms.  ``v_dyn`` replaces the velocities in the time derivative
    of the poles only (a negative control).
    """
    lam = _lam(p, lam)
    lat, h = p.lattice, p.hbar
    v_dyn = s.v if v_dyn is None else np.asarray(v_dyn, dtype=complex)
    L, M = build_lax_t2(s, p, z, lam)
    n = len(s.x)
    K = L - 2 * z * np.eye(n)
    _check_on_curve(K)
    c = null_vector(K)
    cdot = M @ c
    d = x_eval - s.x
    f0, f1, f2 = (ell.phi(d, lam, lat, k) for k in range(3))
    u = 2 * p.c_quad / h ** 2 - np.sum(ell.wp(d, lat))
    expo = np.exp((x_eval * z + s.t * z ** 2) / h)
    f = c @ f0
    fx = c @ f1
    fxx = c @ f2
    ft = cdot @ f0 - (c * v_dyn) @ f1
    psi = expo * f
    psi_t = expo * (z ** 2 / h * f + ft)
    psi_xx = expo * ((z / h) ** 2 * f + 2 * z / h * fx + fxx)
    terms = (-h * psi_t, h ** 2 * psi_xx, 2 * h ** 2 * u * psi)
    res = sum(terms)
    if relative:
        return complex(res / sum(abs(t) for t in terms))
    return complex(res)


# --- flat state helpers for the integrator ---------------------------------

def pack(x, v) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=complex), np.asarray(v, dtype=complex)])


def unpack(y):
    n = len(y) // 2
    return y[:n], y[n:]


def t2_rhs(p: CMParams):
    def rhs(y):
        x, v = unpack(y)
        return pack(v, accel_t2(CMState(0.0, x, v), p))
    return rhs


def t3_rhs(p: CMParams):
    def rhs(y):
        x, v = unpack(y)
        dx, dv = flow_t3(CMState(0.0, x, v), p)
        return pack(dx, dv)
    return rhs
