"""Elliptic Ruijsenaars-Schneider system as pole dynamics of elliptic 2D Toda solutions.

The state stores positions ``x`` and t1-velocities ``v``.  ``eta`` is the
lattice shift of the Toda difference operators.  ``A`` is off-diagonal
with entries ``Phi(x_i - x_j)``; ``A^-`` has entries ``Phi(x_i - x_j - eta)``
for all ``i, j`` (its diagonal is ``Phi(-eta)``); ``D^0``, ``D^+``, ``D^-``
are diagonal with ``sum_k v_k zeta(x_i - x_k + s)`` for ``s = 0, eta, -eta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import elliptic as ell
from . import pairwise as pw
from .calogero import _check_on_curve, null_vector
from .elliptic import Lattice
from .errors import BranchJumpError, ConvergenceError, DegeneracyError, SingularSystemError, ZeroVelocityError
from .linalg import PolyInZ, charpoly_in_z, commutator

DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class RSParams:
    n_particles: int
    lattice: Lattice
    eta: complex
    lambda_default: complex = 0.37 + 0.21j
    c_quad: complex = 0.0
    r_coeff: complex = 0.0


@dataclass(frozen=True)
class RSState:
    t: float
    x: np.ndarray
    v: np.ndarray


def rs_state(x, v, t: float = 0.0) -> RSState:
    return RSState(t, np.asarray(x, dtype=complex), np.asarray(v, dtype=complex))


def _lam(p: RSParams, lam):
    return p.lambda_default if lam is None else lam


def check_state(x, eta, lat: Lattice):
    pw.check_distinct(x, lat, shifts=(eta, -eta))


def _zsum(x, v, shift, lat):
    """``sum_{k != i} v_k zeta(x_i - x_k + shift)``."""
    Z = pw.offdiag(lambda d: ell.zeta(d + shift, lat), x)
    return Z @ v


def _a_minus(x, eta, lam, lat, order=0):
    return ell.phi(pw.differences(x) - eta, lam, lat, order)


def build_lax_rs(s: RSState, p: RSParams, lam=None):
    """``L = Xdot A^-`` and ``M = r eta I + Xdot A - Xdot A^- + D^0 - D^+ - zeta(eta) Xdot``.

    The last term of ``M`` comes from the constant part of ``b(x)`` at its
    own pole ``x = x_i``; without it the first-order pole conditions of the
    linear problem fail.
    """
    lam = _lam(p, lam)
    lat, eta = p.lattice, p.eta
    check_state(s.x, eta, lat)
    n = len(s.x)
    Xd = np.diag(s.v)
    Am = _a_minus(s.x, eta, lam, lat)
    A = pw.phi_matrix(s.x, lam, lat)
    D0 = np.diag(_zsum(s.x, s.v, 0.0, lat))
    Dp = np.diag(_zsum(s.x, s.v, eta, lat))
    L = Xd @ Am
    M = p.r_coeff * eta * np.eye(n) + Xd @ A - Xd @ Am + D0 - Dp - ell.zeta(eta, lat) * Xd
    return L, M


def _degeneracy_guard(x, eta, lat):
    W = pw.offdiag(lambda d: ell.wp(d, lat), x)
    wpe = ell.wp(eta, lat)
    n = len(x)
    off = ~np.eye(n, dtype=bool)
    if n > 1:
        den = wpe - W[off]
        scale = max(abs(wpe), float(np.max(np.abs(W[off]))), 1.0)
        if np.min(np.abs(den)) < DEGENERACY_TOL * scale:
            raise DegeneracyError("wp(eta) - wp(x_i - x_k) vanishes")
    return W, wpe


def accel_rs(s: RSState, eta, lat: Lattice, form: str = "wp") -> np.ndarray:
    """Ruijsenaars-Schneider accelerations in the ``wp`` form or the ``zeta`` form."""
    check_state(s.x, eta, lat)
    x, v = s.x, s.v
    n = len(x)
    if form == "zeta":
        S = pw.offdiag(lambda d: ell.zeta(d + eta, lat) + ell.zeta(d - eta, lat) - 2 * ell.zeta(d, lat), x)
        return -v * (S @ v)
    if form != "wp":
        raise ValueError("form must be 'wp' or 'zeta'")
    W, wpe = _degeneracy_guard(x, eta, lat)
    W1 = pw.wp_matrix(x, lat, 1)
    ratio = np.zeros((n, n), dtype=complex)
    off = ~np.eye(n, dtype=bool)
    ratio[off] = W1[off] / (wpe - W[off])
    return v * (ratio @ v)


def lax_dot_rs(s: RSState, p: RSParams, acc, lam=None) -> np.ndarray:
    lam = _lam(p, lam)
    acc = np.asarray(acc, dtype=complex)
    dv = s.v[:, None] - s.v[None, :]
    Am = _a_minus(s.x, p.eta, lam, p.lattice)
    Am1 = _a_minus(s.x, p.eta, lam, p.lattice, 1)
    return np.diag(acc) @ Am + np.diag(s.v) @ (dv * Am1)


def rs_identity_residual(s: RSState, p: RSParams, lam=None, acc=None) -> np.ndarray:
    """``dL/dt + [L, M] - (Xddot Xdot^-1 + D^+ + D^- - 2 D^0) L``.

    This vanishes for any accelerations (the ``Xddot`` terms cancel);
    :func:`rs_lax_residual` is the companion that vanishes only on the
    equations of motion.
    """
    lam = _lam(p, lam)
    lat, eta = p.lattice, p.eta
    acc = accel_rs(s, eta, lat) if acc is None else np.asarray(acc, dtype=complex)
    L, M = build_lax_rs(s, p, lam)
    D0 = _zsum(s.x, s.v, 0.0, lat)
    Dp = _zsum(s.x, s.v, eta, lat)
    Dm = _zsum(s.x, s.v, -eta, lat)
    P = np.diag(acc / s.v + Dp + Dm - 2 * D0)
    return lax_dot_rs(s, p, acc, lam) + commutator(L, M) - P @ L


def rs_lax_residual(s: RSState, p: RSParams, lam=None, acc=None) -> np.ndarray:
    """``dL/dt + [L, M]``; zero exactly when ``acc`` solves the equations of motion."""
    lam = _lam(p, lam)
    acc = accel_rs(s, p.eta, p.lattice) if acc is None else np.asarray(acc, dtype=complex)
    L, M = build_lax_rs(s, p, lam)
    return lax_dot_rs(s, p, acc, lam) + commutator(L, M)


def _pair_product_log(x, eta, lat):
    """``log prod_{k != i} sigma(x_ik + eta) sigma(x_ik - eta) / sigma(x_ik)^2`` (mod 2 pi i)."""
    ls = lambda d: ell.log_sigma(d, lat)  # noqa: E731
    T = pw.offdiag(lambda d: ls(d + eta) + ls(d - eta) - 2 * ls(d), x)
    return T.sum(axis=1)


def tbar_velocity(s: RSState, p: RSParams) -> np.ndarray:
    """``d x_i / d tbar_1`` from the first- and second-order pole relations."""
    if np.any(s.v == 0):
        raise ZeroVelocityError("all t1-velocities must be nonzero")
    lat, eta = p.lattice, p.eta
    check_state(s.x, eta, lat)
    prod = np.exp(2 * p.c_quad * eta ** 2 + 2 * ell.log_sigma(eta, lat) + _pair_product_log(s.x, eta, lat))
    return -prod / s.v


def tbar_mixed_derivative(s: RSState, p: RSParams):
    """Two evaluations of ``d^2 x_i / (dt1 dtbar1)``.

    The first differentiates the product formula for the tbar-velocities
    along the t1 flow (chain rule with :func:`accel_rs`); the second is the
    zeta-sum expression.  They agree on solutions.
    """
    lat, eta = p.lattice, p.eta
    vb = tbar_velocity(s, p)
    acc = accel_rs(s, eta, lat)
    dv = s.v[:, None] - s.v[None, :]
    S = pw.offdiag(lambda d: ell.zeta(d + eta, lat) + ell.zeta(d - eta, lat) - 2 * ell.zeta(d, lat), s.x)
    dlogP = np.sum(dv * S, axis=1)
    chain = vb * (dlogP - acc / s.v)
    closed = vb * s.v * S.sum(axis=1)
    return chain, closed


def tbar_acceleration(s: RSState, p: RSParams):
    """``d^2 x / dtbar1^2`` from the tbar relations and from the RS ``wp`` form.

    Returns ``(derived, rs_form)``; the tbar dynamics is again of
    Ruijsenaars-Schneider type, so the two agree.
    """
    lat, eta = p.lattice, p.eta
    vb = tbar_velocity(s, p)
    S = pw.offdiag(lambda d: ell.zeta(d + eta, lat) + ell.zeta(d - eta, lat) - 2 * ell.zeta(d, lat), s.x)
    # d/dtbar log P_i minus (d/dtbar v_i) / v_i, with the mixed relation for the latter
    derived = vb * (np.sum((vb[:, None] - vb[None, :]) * S, axis=1) - vb * S.sum(axis=1))
    rs_form = accel_rs(RSState(s.t, s.x, vb), eta, lat)
    return derived, rs_form


def hamiltonians_rs(s: RSState, p: RSParams, lam=None) -> dict:
    """``H_plus = sum v``, ``H_minus = sum tbar-velocities`` and the trace ratios."""
    lam = _lam(p, lam)
    L, _ = build_lax_rs(s, p, lam)
    hp = complex(np.sum(s.v))
    hm = complex(np.sum(tbar_velocity(s, p)))
    cond = np.linalg.cond(L)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystemError("the Lax matrix is singular; tr L^-1 undefined")
    return {
        "H_plus": hp,
        "H_minus": hm,
        "trL_ratio": complex(np.trace(L) / hp),
        "trLinv_ratio": complex(np.trace(np.linalg.inv(L)) / hm),
    }


def spectral_curve_rs(s: RSState, p: RSParams, lam=None) -> PolyInZ:
    """Coefficients in ``z`` of ``det(z I - L)``."""
    lam = _lam(p, lam)
    L, _ = build_lax_rs(s, p, lam)
    n = len(s.x)
    radius = max(1.0, float(np.max(np.abs(L))))
    return charpoly_in_z(lambda z: z * np.eye(n) - L, n, radius=radius)


# --- Toda fields and wave function ---------------------------------------

def toda_fields(s: RSState, p: RSParams, x_eval, form: str = "wp"):
    """``(a(x), b(x))`` at ``x_eval``; ``form`` selects the wp product or the sigma ratios for ``a``."""
    lat, eta = p.lattice, p.eta
    d = x_eval - s.x
    n = len(s.x)
    pref = 2 * eta ** 2 * p.c_quad
    if form == "wp":
        a = np.exp(pref + 2 * n * ell.log_sigma(eta, lat)) * np.prod(ell.wp(eta, lat) - ell.wp(d, lat))
    elif form == "sigma":
        logs = ell.log_sigma(d + eta, lat) + ell.log_sigma(d - eta, lat) - 2 * ell.log_sigma(d, lat)
        a = np.exp(pref + np.sum(logs))
    else:
        raise ValueError("form must be 'wp' or 'sigma'")
    b = np.sum(s.v * (ell.zeta(d, lat) - ell.zeta(d + eta, lat))) + p.r_coeff * eta
    return complex(a), complex(b)


def wave_residual_rs(s: RSState, p: RSParams, z, lam=None, x_eval=0.0,
                     relative: bool = True, v_dyn=None) -> complex:
    """Residual of ``psi_t1(x) = psi(x + eta) + b(x) psi(x)`` for the pole ansatz.

    The common factor ``z^(x/eta) exp(t1 z + tbar1/z)`` is divided out.
    ``v_dyn`` replaces the velocities in the time derivative of the poles.
    """
    lam = _lam(p, lam)
    lat, eta = p.lattice, p.eta
    L, M = build_lax_rs(s, p, lam)
    n = len(s.x)
    K = L - z * np.eye(n)
    _check_on_curve(K)
    c = null_vector(K)
    cdot = M @ c
    v_dyn = s.v if v_dyn is None else np.asarray(v_dyn, dtype=complex)
    d = x_eval - s.x
    f0 = ell.phi(d, lam, lat)
    f1 = ell.phi(d, lam, lat, 1)
    fs = ell.phi(d + eta, lam, lat)
    _, b = toda_fields(s, p, x_eval)
    f = c @ f0
    terms = (-(z * f + cdot @ f0 - (c * v_dyn) @ f1), z * (c @ fs), b * f)
    res = sum(terms)
    if relative:
        return complex(res / sum(abs(t) for t in terms))
    return complex(res)


# --- self-dual and discrete forms -----------------------------------------

def selfdual_rhs_rs(x, y, mu, eta, lat: Lattice):
    """First-order (poles, zeros) system of Ruijsenaars-Schneider type."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    pw.check_distinct(x, lat)
    pw.check_distinct(y, lat)
    pw.check_cross(x, y, lat)
    pw.check_cross(x, y, lat, shift=-eta)
    ls = lambda d: ell.log_sigma(d, lat)  # noqa: E731
    pre = ell.log_sigma(eta, lat) + mu
    xx = pw.offdiag(lambda d: ls(d - eta) - ls(d), x).sum(axis=1)
    yy = pw.offdiag(lambda d: ls(d + eta) - ls(d), y).sum(axis=1)
    dxy = x[:, None] - y[None, :]
    xy = (ls(dxy) - ls(dxy - eta)).sum(axis=1)
    yx = (ls(-dxy) - ls(-dxy + eta)).sum(axis=0)
    return -np.exp(pre + xx + xy), -np.exp(pre + yy + yx)


def _wrap(z):
    return z - 2j * np.pi * np.round(z.imag / (2 * np.pi))


def _discrete_rs_fixed(x_prev, x_cur, eta, lat):
    ls = lambda d: ell.log_sigma(d, lat)  # noqa: E731
    dp = x_cur[:, None] - x_prev[None, :]
    g = (ls(dp) - ls(dp + eta)).sum(axis=1)
    g = g + pw.offdiag(lambda d: ls(d + eta) - ls(d - eta), x_cur).sum(axis=1)
    return g


def _discrete_rs_next_logs(x_cur, y, eta, lat):
    dn = x_cur[:, None] - y[None, :]
    return ell.log_sigma(dn - eta, lat) - ell.log_sigma(dn, lat)


def discrete_rs_residual(x_prev, x_cur, x_next, eta, lat: Lattice) -> np.ndarray:
    """Logarithmic form of the discrete RS equations, wrapped to ``|Im| <= pi``.

    The ``k = i`` factor of the middle group equals ``-1`` and cancels the
    ``-1`` on the right side, so the equations read ``G_i = 0 mod 2 pi i``.
    """
    x_prev, x_cur, x_next = (np.asarray(a, dtype=complex) for a in (x_prev, x_cur, x_next))
    g = _discrete_rs_fixed(x_prev, x_cur, eta, lat) + _discrete_rs_next_logs(x_cur, x_next, eta, lat).sum(axis=1)
    return _wrap(g)


def discrete_rs_step(x_prev, x_cur, guess=None, eta=None, lat: Lattice | None = None,
                     tol: float = 1e-10, max_iter: int = 50):
    """Newton solve of the discrete RS equations for the next slice.

    Each log-sigma entry is continued from the previous iterate, so the
    branch is the one selected by the initial guess; a step whose actual
    change departs from the linear prediction by more than ``pi`` raises
    :class:`BranchJumpError`.
    """
    if eta is None or lat is None:
        raise ValueError("eta and a lattice are required")
    x_prev = np.asarray(x_prev, dtype=complex)
    x_cur = np.asarray(x_cur, dtype=complex)
    check_state(x_cur, eta, lat)
    y = np.asarray(2 * x_cur - x_prev if guess is None else guess, dtype=complex).copy()
    fixed = _discrete_rs_fixed(x_prev, x_cur, eta, lat)
    logs = _discrete_rs_next_logs(x_cur, y, eta, lat)
    g = fixed + logs.sum(axis=1)
    target = 2j * np.pi * np.round(g.imag / (2 * np.pi))

    def jac(y):
        dn = x_cur[:, None] - y[None, :]
        return ell.zeta(dn, lat) - ell.zeta(dn - eta, lat)

    for it in range(max_iter + 1):
        r = g - target
        if float(np.max(np.abs(r))) <= tol:
            return y
        if it == max_iter:
            break
        J = jac(y)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
            raise SingularSystemError("discrete RS Jacobian is singular")
        step = -np.linalg.solve(J, r)
        y = y + step
        raw = _discrete_rs_next_logs(x_cur, y, eta, lat)
        logs = raw + 2j * np.pi * np.round((logs - raw).imag / (2 * np.pi))
        g_new = fixed + logs.sum(axis=1)
        if float(np.max(np.abs((g_new - g - J @ step).imag))) > np.pi:
            raise BranchJumpError("log branch jumped during the discrete RS Newton step")
        g = g_new
    raise ConvergenceError(f"discrete RS Newton did not converge in {max_iter} iterations")


# --- flat state helpers ----------------------------------------------------

def rs_rhs(eta, lat: Lattice):
    def rhs(y):
        n = len(y) // 2
        x, v = y[:n], y[n:]
        return np.concatenate([v, accel_rs(RSState(0.0, x, v), eta, lat)])
    return rhs
