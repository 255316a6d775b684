"""Independent reference evaluations used by the tests.

These deliberately avoid the theta and Lambert series of the library:
lattice sums with Richardson extrapolation in the box size, and the
Jacobi theta functions of mpmath.
"""
import mpmath as mp
import numpy as np


def _box(lat, m):
    k = np.arange(-m, m + 1)
    a, b = np.meshgrid(k, k, indexing="ij")
    w = 2 * a * lat.omega + 2 * b * lat.omega_prime
    w = w.ravel()
    return w[w != 0]


def _richardson(s, m, powers=(2, 3, 4)):
    """Extrapolate box sums ``s(m)`` whose tail is ``sum_p a_p m^-p``.

    Boundary-layer terms make both even and odd powers appear, so all of
    ``powers`` are fitted from ``len(powers) + 1`` box sizes.
    """
    sizes = [m * k for k in range(1, len(powers) + 2)]
    rows = [[1.0] + [mm ** -p for p in powers] for mm in sizes]
    vals = [s(mm) for mm in sizes]
    return np.linalg.solve(np.array(rows, dtype=complex), np.array(vals, dtype=complex))[0]


def wp_lattice_sum(x, lat, m=40):
    """``1/x^2 + sum' (1/(x-w)^2 - 1/w^2)`` over square boxes, extrapolated in the box size."""
    def s(mm):
        w = _box(lat, mm)
        return 1 / x ** 2 + np.sum(1 / (x - w) ** 2 - 1 / w ** 2)
    return _richardson(s, m)


def sigma_product(x, lat, m=40):
    """Truncated Weierstrass product with convergence factors over ``|a|, |b| <= m``.

    The tails of the ``w^-4`` and ``w^-6`` sums outside the box are restored
    from ``g2 = 60 G4`` and ``g3 = 140 G6``, which are tested separately.
    """
    w = _box(lat, m)
    u = x / w
    logp = np.sum(np.log1p(-u) + u + 0.5 * u ** 2)
    # log(1-u) + u + u^2/2 = -u^3/3 - u^4/4 - u^5/5 - u^6/6 - ...; odd powers
    # cancel over the symmetric box, the even tails outside it are added back
    logp += -(x ** 4) / 4 * (lat.g2 / 60 - np.sum(w ** -4.0))
    logp += -(x ** 6) / 6 * (lat.g3 / 140 - np.sum(w ** -6.0))
    return x * np.exp(logp)


def eisenstein_g2_g3(lat, m=40):
    """``g2 = 60 sum' w^-4``, ``g3 = 140 sum' w^-6`` by box sums extrapolated in the box size."""
    g2 = _richardson(lambda mm: 60 * np.sum(_box(lat, mm) ** -4.0), m)
    g3 = _richardson(lambda mm: 140 * np.sum(_box(lat, mm) ** -6.0), m)
    return g2, g3


def wp_theta(x, lat, dps=30):
    """wp from mpmath Jacobi theta functions in the caller's basis.

    ``wp(x) = -eta1/omega - (pi/(2 omega))^2 (log theta1)''(v)`` with
    ``v = pi x / (2 omega)`` and ``eta1 = -pi^2 theta1'''(0) / (12 omega theta1'(0))``.
    """
    with mp.workdps(dps):
        w1 = mp.mpc(lat.omega)
        tau = mp.mpc(lat.omega_prime) / w1
        q = mp.exp(1j * mp.pi * tau)
        v = mp.pi * mp.mpc(x) / (2 * w1)
        t0 = mp.jtheta(1, v, q)
        t1 = mp.jtheta(1, v, q, 1)
        t2 = mp.jtheta(1, v, q, 2)
        d2log = (t2 * t0 - t1 ** 2) / t0 ** 2
        eta1 = -mp.pi ** 2 * mp.jtheta(1, 0, q, 3) / (12 * w1 * mp.jtheta(1, 0, q, 1))
        val = -eta1 / w1 - (mp.pi / (2 * w1)) ** 2 * d2log
        return complex(val), complex(eta1)
