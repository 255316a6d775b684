import numpy as np
import pytest

from ellpoles import bkp
from ellpoles import dynamics as dyn
from ellpoles import elliptic as ell
from ellpoles import pairwise as pw
from ellpoles.errors import SingularSystemError, ZeroVelocityError

PAIRS = ((0.4 + 0.1j, 0.3 + 0.2j), (-0.2 + 0.5j, 0.21 - 0.17j))


def random_state(rng, lat, n):
    x = pw.random_points(rng, lat, n, min_sep=0.25)
    v = pw.random_disk(rng, n, 1.0) + 0.5  # keep velocities away from zero
    return bkp.nv_state(x, v)


def matmax(a):
    return float(np.max(np.abs(a)))


def test_single_particle(square):
    p = bkp.NVParams(square, gamma=0.3)
    s = bkp.nv_state([0.1], [0.8])
    z, lam = PAIRS[0]
    L, Mh = bkp.nv_system(s, p, z, lam)
    assert L[0, 0] == pytest.approx(-6 * 0.3 / 0.8)
    assert Mh[0, 0] == pytest.approx(-1 / z + z * 0.8)
    assert bkp.nv_accel(s, bkp.NVParams(square)) == pytest.approx([0])


def test_offdiagonal_matches_bkp(lattice, rng):
    s = random_state(rng, lattice, 4)
    p = bkp.NVParams(lattice, gamma=0.2)
    z, lam = PAIRS[1]
    L, _ = bkp.nv_system(s, p, z, lam)
    Lb, _ = bkp.build_lax_bkp(bkp.bkp_state(s.x, s.v), lattice, z, lam)
    off = ~np.eye(4, dtype=bool)
    assert np.array_equal(L[off], Lb[off])


def test_velocity_link(square, rng):
    s = random_state(rng, square, 3)
    p = bkp.NVParams(square, gamma=-0.4)
    u = bkp.nv_t3_velocity(s, p)
    z, lam = PAIRS[0]
    L, _ = bkp.nv_system(s, p, z, lam)
    Lb, _ = bkp.build_lax_bkp(bkp.bkp_state(s.x, u), square, z, lam)
    assert np.allclose(np.diag(L), np.diag(Lb), rtol=1e-12)
    W = pw.wp_matrix(s.x, square)
    assert np.allclose(s.v * u, 6 * np.sum((s.v[:, None] + s.v[None, :]) * W, axis=1) - 2.4, rtol=1e-12)


def test_errors(square):
    p = bkp.NVParams(square)
    with pytest.raises(ZeroVelocityError):
        bkp.nv_system(bkp.nv_state([0.1, 0.3], [0.0, 1.0]), p, 0.3, 0.2)
    with pytest.raises(ValueError):
        bkp.nv_system(bkp.nv_state([0.1, 0.3], [1.0, 1.0]), p, 0, 0.2)


@pytest.mark.parametrize("gamma", [0.0, 0.35 - 0.1j])
@pytest.mark.parametrize("n", [2, 3, 4])
def test_accel_solve_and_manakov(lattice, rng, gamma, n):
    s = random_state(rng, lattice, n)
    p = bkp.NVParams(lattice, gamma=gamma)
    acc, info = bkp.nv_accel(s, p, return_info=True)
    K, f = bkp.nv_matrix(s, p)
    row_scale = np.abs(K) @ np.abs(acc) + np.abs(f)
    assert np.all(np.abs(bkp.nv_equation_residual(s, p, acc)) <= 1e-10 * np.maximum(row_scale, 1.0))
    assert info["cond"] < bkp.NV_COND_MAX
    for z, lam in PAIRS:
        r = bkp.nv_manakov_residual(s, p, z, lam, acc)
        L, Mh = bkp.nv_system(s, p, z, lam)
        scale = matmax(bkp.nv_lax_dot(s, p, acc, z, lam)) + matmax(bkp.commutator(L, Mh))
        assert matmax(r) <= 1e-9 * scale


def test_manakov_control(square, rng):
    s = random_state(rng, square, 3)
    p = bkp.NVParams(square, gamma=0.2)
    acc = bkp.nv_accel(s, p) + 1e-3
    assert matmax(bkp.nv_manakov_residual(s, p, *PAIRS[0], acc)) >= 1e-6


def test_gamma_zero_gauge_freedom(square, rng):
    # with gamma = 0 adding a multiple of the velocities leaves the equations satisfied
    s = random_state(rng, square, 3)
    p = bkp.NVParams(square)
    acc = bkp.nv_accel(s, p)
    assert abs(acc.sum()) <= 1e-12 * matmax(acc)
    assert matmax(bkp.nv_equation_residual(s, p, acc + 0.7 * s.v)) <= 1e-10 * max(1.0, matmax(acc))


def test_singular_system_reported(square):
    # for N = 2, det K = gamma (gamma + (v1 + v2) wp(x12))
    x = np.array([0.1, 0.45 + 0.2j])
    v = np.array([1.0, 0.5])
    w = ell.wp(x[0] - x[1], square)
    with pytest.raises(SingularSystemError):
        bkp.nv_accel(bkp.nv_state(x, v), bkp.NVParams(square, gamma=-1.5 * w))


def test_rational_limit(rng):
    lat = ell.Lattice(200.0, 200.0j)
    for _ in range(3):
        x = pw.random_disk(rng, 3, 1.0)
        v = pw.random_disk(rng, 3, 1.0) + 0.5
        acc = bkp.nv_accel(bkp.nv_state(x, v), bkp.NVParams(lat))
        ref = bkp.rational_nv_accel(x, v)
        assert matmax(acc - ref) <= 1e-5 * matmax(ref)


def test_curve_conserved_along_flow(square):
    rng = np.random.default_rng(5)
    s = random_state(rng, square, 3)
    p = bkp.NVParams(square, gamma=0.3)
    traj = dyn.integrate(bkp.nv_rhs(p), np.concatenate([s.x, s.v]), 0.05)
    ev = {f"R{i}": (lambda y, z=z, lam=lam: bkp.nv_curve_value(bkp.nv_state(y[:3], y[3:]), p, z, lam))
          for i, (z, lam) in enumerate(PAIRS)}
    rep = dyn.monitor(traj, ev, stride=max(1, len(traj.states) // 20))
    for r in rep.values():
        assert r["max_rel_drift"] <= 1e-6 * 0.05
