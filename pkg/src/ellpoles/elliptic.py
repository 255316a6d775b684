"""Weierstrass elliptic functions on an arbitrary period lattice.

The lattice is generated by ``2*omega`` and ``2*omega_prime``.  All
evaluations go through the same pipeline:

1. the basis is brought to a reduced one (``tau`` in the standard
   fundamental domain of SL(2, Z)), so the working nome satisfies
   ``|q| <= exp(-pi*sqrt(3)/2) ~ 0.066`` regardless of the basis the
   caller chose;
2. the argument is reduced into the period parallelogram centred at 0;
3. q-series are summed (theta series for sigma, Lambert series for
   zeta and the derivatives of wp).

Every public function accepts scalars or numpy arrays and returns the
same shape.  Derivatives are computed analytically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LatticeError, PoleError

__all__ = [
    "Lattice",
    "ReducedArgument",
    "POLE_TOL",
    "reduce",
    "sigma",
    "log_sigma",
    "zeta",
    "wp",
    "phi",
    "square_lattice",
]

POLE_TOL = 1e-8
_SERIES_EPS = 1e-18


def _reduce_basis(w1: complex, w3: complex):
    """Return (w1r, w3r, M) with (w1r, w3r)^T = M (w1, w3)^T and tau_r reduced."""
    m = np.array([[1, 0], [0, 1]], dtype=np.int64)
    a, b = complex(w1), complex(w3)
    for _ in range(200):
        tau = b / a
        n = round(tau.real)
        if n:
            b = b - n * a
            m[1] -= n * m[0]
            tau = b / a
        if abs(tau) < 1.0 - 1e-14:
            a, b = b, -a
            m = np.array([m[1], -m[0]])
            continue
        break
    return a, b, m


@dataclass(frozen=True)
class Lattice:
    """Period lattice with half-periods ``omega`` and ``omega_prime``.

    Derived attributes (``tau``, ``q``, ``g2``, ``g3``, ``eta1``, ``eta2``)
    refer to the basis supplied by the caller; the reduced basis used for
    evaluation is kept in private fields.
    """

    omega: complex
    omega_prime: complex
    tau: complex = field(init=False)
    q: complex = field(init=False)
    g2: complex = field(init=False)
    g3: complex = field(init=False)
    eta1: complex = field(init=False)
    eta2: complex = field(init=False)

    def __post_init__(self):
        w1 = complex(self.omega)
        w3 = complex(self.omega_prime)
        object.__setattr__(self, "omega", w1)
        object.__setattr__(self, "omega_prime", w3)
        if w1 == 0 or not (w3 / w1).imag > 0:
            raise LatticeError(f"need Im(omega'/omega) > 0, got omega={w1}, omega'={w3}")
        tau = w3 / w1
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "q", complex(np.exp(1j * np.pi * tau)))

        r1, r3, mat = _reduce_basis(w1, w3)
        taur = r3 / r1
        qr = complex(np.exp(1j * np.pi * taur))
        nterms = int(math.ceil(math.log(_SERIES_EPS) / math.log(abs(qr)))) + 4
        n = np.arange(1, nterms + 1, dtype=float)
        q2n = qr ** (2 * n)
        lam = q2n / (1.0 - q2n)  # Lambert weights q^{2n}/(1-q^{2n})

        k = math.pi / (2 * r1)
        e2 = 1.0 - 24.0 * np.sum(n * lam)
        e4 = 1.0 + 240.0 * np.sum(n**3 * lam)
        e6 = 1.0 - 504.0 * np.sum(n**5 * lam)
        eta1r = complex(math.pi**2 / (12.0 * r1) * e2)
        eta3r = (eta1r * r3 - 0.5j * math.pi) / r1
        g2 = complex(4.0 / 3.0 * k**4 * e4)
        g3 = complex(8.0 / 27.0 * k**6 * e6)

        # original half-periods in terms of the reduced ones
        inv = np.array([[mat[1, 1], -mat[0, 1]], [-mat[1, 0], mat[0, 0]]], dtype=np.int64)
        eta1 = inv[0, 0] * eta1r + inv[0, 1] * eta3r
        eta2 = inv[1, 0] * eta1r + inv[1, 1] * eta3r

        # theta_1 series: 2 sum (-1)^j q^{(j+1/2)^2} sin((2j+1) v)
        j = np.arange(0, nterms, dtype=float)
        th_coef = 2.0 * (-1.0) ** j * np.exp(1j * np.pi * taur * (j + 0.5) ** 2)
        th_odd = 2 * j + 1
        keep = np.abs(th_coef) > 1e-300
        th_coef, th_odd = th_coef[keep], th_odd[keep]
        th1p0 = complex(np.sum(th_coef * th_odd))

        object.__setattr__(self, "g2", g2)
        object.__setattr__(self, "g3", g3)
        object.__setattr__(self, "eta1", complex(eta1))
        object.__setattr__(self, "eta2", complex(eta2))
        object.__setattr__(self, "_r1", complex(r1))
        object.__setattr__(self, "_r3", complex(r3))
        object.__setattr__(self, "_eta1r", eta1r)
        object.__setattr__(self, "_eta3r", complex(eta3r))
        object.__setattr__(self, "_basis", mat)
        object.__setattr__(self, "_n", n)
        object.__setattr__(self, "_lam", lam)
        object.__setattr__(self, "_th_coef", th_coef)
        object.__setattr__(self, "_th_odd", th_odd)
        object.__setattr__(self, "_th1p0", th1p0)
        # cell-frame conversion x -> (a, b) with x = 2a r1 + 2b r3
        basis = np.array([[2 * r1.real, 2 * r3.real], [2 * r1.imag, 2 * r3.imag]])
        object.__setattr__(self, "_to_cell", np.linalg.inv(basis))

    @property
    def periods(self) -> tuple[complex, complex]:
        return 2 * self.omega, 2 * self.omega_prime

    @property
    def reduced_half_periods(self) -> tuple[complex, complex]:
        return self._r1, self._r3

    @property
    def pole_scale(self) -> float:
        """Length unit for pole and collision tolerances (shortest period)."""
        return abs(2 * self._r1)

    def point(self, a, b):
        """The point ``2 a omega_r + 2 b omega_r'`` of the reduced frame."""
        return 2 * np.asarray(a) * self._r1 + 2 * np.asarray(b) * self._r3

    def __repr__(self):
        return f"Lattice(omega={self.omega!r}, omega_prime={self.omega_prime!r})"


def square_lattice() -> Lattice:
    """The canonical lattice with periods (1, i)."""
    return Lattice(0.5, 0.5j)


@dataclass(frozen=True)
class ReducedArgument:
    """``x_original = x_reduced + 2 m omega + 2 m_prime omega_prime`` and
    ``sigma(x_original) = exp(log_quasi_factor) * sigma(x_reduced)``."""

    x_reduced: complex
    m: int
    m_prime: int
    log_quasi_factor: complex


def _reduce_arrays(x: np.ndarray, lat: Lattice):
    """Vectorised reduction in the reduced frame.

    Returns (x_red, mr, nr, log_factor, shift_eta) with integer shifts in the
    reduced basis and ``shift_eta = 2 mr eta1r + 2 nr eta3r``.
    """
    ab = lat._to_cell @ np.vstack([x.real.ravel(), x.imag.ravel()])
    mr = np.rint(ab[0]).reshape(x.shape)
    nr = np.rint(ab[1]).reshape(x.shape)
    shift = 2 * mr * lat._r1 + 2 * nr * lat._r3
    xr = x - shift
    seta = 2 * mr * lat._eta1r + 2 * nr * lat._eta3r
    parity = np.mod(mr + nr + mr * nr, 2)
    logf = 1j * np.pi * parity + seta * (xr + 0.5 * shift)
    return xr, mr, nr, logf, seta


def _as_array(x):
    arr = np.asarray(x, dtype=complex)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return complex(arr) if scalar else arr


def _check_poles(xr, lat, what="argument"):
    if np.any(np.abs(xr) < POLE_TOL * lat.pole_scale):
        raise PoleError(f"{what} reduces to a lattice point")


def reduce(x: complex, lat: Lattice) -> ReducedArgument:
    """Reduce ``x`` into the fundamental cell centred at 0."""
    arr = np.asarray([complex(x)])
    xr, mr, nr, logf, _ = _reduce_arrays(arr, lat)
    m, mp = np.array([int(mr[0]), int(nr[0])]) @ lat._basis
    return ReducedArgument(complex(xr[0]), int(m), int(mp), complex(logf[0]))


def _sigma_cell(xr, lat):
    v = (np.pi / (2 * lat._r1)) * xr
    th = np.sum(lat._th_coef * np.sin(np.multiply.outer(v, lat._th_odd)), axis=-1)
    return (2 * lat._r1 / np.pi) * np.exp(lat._eta1r * xr**2 / (2 * lat._r1)) * th / lat._th1p0


def sigma(x, lat: Lattice):
    """Weierstrass sigma function (entire, odd, ``sigma(x)/x -> 1``)."""
    arr, scalar = _as_array(x)
    xr, _, _, logf, _ = _reduce_arrays(arr, lat)
    return _out(_sigma_cell(xr, lat) * np.exp(logf), scalar)


def log_sigma(x, lat: Lattice):
    """A logarithm of sigma (principal log in the cell plus quasi-period factor).

    The branch is not continuous across cell boundaries; only differences
    taken modulo ``2*pi*i`` are meaningful.
    """
    arr, scalar = _as_array(x)
    xr, _, _, logf, _ = _reduce_arrays(arr, lat)
    _check_poles(xr, lat)
    return _out(np.log(_sigma_cell(xr, lat)) + logf, scalar)


def _cot(v):
    return np.cos(v) / np.sin(v)


def zeta(x, lat: Lattice):
    """Weierstrass zeta function, ``zeta(x + 2 omega) = zeta(x) + 2 eta1``."""
    arr, scalar = _as_array(x)
    xr, _, _, _, seta = _reduce_arrays(arr, lat)
    _check_poles(xr, lat)
    k = np.pi / (2 * lat._r1)
    v = k * xr
    tail = np.sum(lat._lam * np.sin(np.multiply.outer(2 * v, lat._n)), axis=-1)
    val = lat._eta1r * xr / lat._r1 + k * (_cot(v) + 4.0 * tail) + seta
    return _out(val, scalar)


def _wp_cell(xr, lat, order):
    k = np.pi / (2 * lat._r1)
    v = k * xr
    c = _cot(v)
    s2 = 1.0 + c * c
    if order == 0:
        f = s2
    elif order == 1:
        f = -2.0 * c * s2
    elif order == 2:
        f = (2.0 + 6.0 * c * c) * s2
    else:
        f = -(16.0 * c + 24.0 * c**3) * s2
    n = lat._n
    phase = np.multiply.outer(2 * v, n) + order * np.pi / 2
    tail = np.sum(n * lat._lam * (2 * n) ** order * np.cos(phase), axis=-1)
    val = k ** (order + 2) * (f - 8.0 * tail)
    if order == 0:
        val = val - lat._eta1r / lat._r1
    return val


def wp(x, lat: Lattice, order: int = 0):
    """Weierstrass wp and its derivatives up to third order."""
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0, 1, 2 or 3")
    arr, scalar = _as_array(x)
    xr, _, _, _, _ = _reduce_arrays(arr, lat)
    _check_poles(xr, lat)
    return _out(_wp_cell(xr, lat, order), scalar)


def phi(x, lam, lat: Lattice, order: int = 0, gauged: bool = False):
    """The kernel ``Phi(x, lam) = sigma(x+lam) exp(-zeta(lam) x) / (sigma(lam) sigma(x))``
    or its x-derivatives up to third order.

    With ``gauged=True`` the result is multiplied by ``exp(zeta(lam) x)``,
    i.e. the gauge factor is stripped after differentiation.  This leaves
    determinants of kernel matrices unchanged and avoids the essential
    singularity at ``lam -> 0``.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0, 1, 2 or 3")
    arr = np.asarray(x, dtype=complex)
    lam_arr = np.asarray(lam, dtype=complex)
    arr, lam_arr = np.broadcast_arrays(arr, lam_arr)
    scalar = arr.ndim == 0

    xr, _, _, lf_x, _ = _reduce_arrays(arr, lat)
    _check_poles(xr, lat, "x")
    lr, _, _, lf_l, _ = _reduce_arrays(lam_arr, lat)
    _check_poles(lr, lat, "lambda")
    u = arr + lam_arr
    ur, _, _, lf_u, _ = _reduce_arrays(u, lat)

    zl = zeta(lam_arr, lat)
    logmag = lf_u - lf_l - lf_x
    if not gauged:
        logmag = logmag - zl * arr
    val = _sigma_cell(ur, lat) / (_sigma_cell(lr, lat) * _sigma_cell(xr, lat)) * np.exp(logmag)
    if order == 0:
        return _out(val, scalar)

    g = zeta(u, lat) - zeta(arr, lat) - zl
    g1 = wp(arr, lat) - wp(u, lat)
    if order == 1:
        return _out(val * g, scalar)
    if order == 2:
        return _out(val * (g1 + g * g), scalar)
    g2 = wp(arr, lat, 1) - wp(u, lat, 1)
    return _out(val * (g2 + 3 * g * g1 + g**3), scalar)
