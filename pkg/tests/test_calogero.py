import numpy as np
import pytest

from ellpoles import calogero as cm
from ellpoles import dynamics as dyn
from ellpoles import elliptic as ell
from ellpoles import pairwise as pw
from ellpoles.errors import CollisionError, ConvergenceError, NotOnCurveError

LAMS = (0.37 + 0.21j, -0.18 + 0.33j)


def random_state(rng, lat, n, speed=1.0):
    x = pw.random_points(rng, lat, n, min_sep=0.2)
    return cm.make_state(x, pw.random_disk(rng, n, speed))


def params(lat, n, **kw):
    return cm.CMParams(n, lat, **kw)


def matmax(a):
    return float(np.max(np.abs(a)))


# --- Lax pair -----------------------------------------------------------

def test_lax_single_particle(square):
    p = params(square, 1, hbar=0.7, c_quad=0.3)
    s = cm.make_state([0.1], [0.4 + 0.2j])
    L, M = cm.build_lax_t2(s, p, lam=LAMS[0])
    assert L == pytest.approx(np.array([[-(0.4 + 0.2j)]]))
    assert M[0, 0] == pytest.approx(0.7 * ell.wp(LAMS[0], square) + 4 * 0.3 / 0.7)


def test_lax_entries(square, rng):
    s = random_state(rng, square, 3)
    p = params(square, 3, hbar=0.5)
    L, _ = cm.build_lax_t2(s, p, lam=LAMS[0])
    assert L[0, 1] == pytest.approx(-1.0 * ell.phi(s.x[0] - s.x[1], LAMS[0], square))
    assert L[2, 2] == -s.v[2]


def test_adot_commutator_identity(lattice, rng):
    s = random_state(rng, lattice, 4)
    B = pw.phi_matrix(s.x, LAMS[0], lattice, 1)
    dA = (s.v[:, None] - s.v[None, :]) * B
    assert np.allclose(dA, np.diag(s.v) @ B - B @ np.diag(s.v), rtol=0, atol=1e-14 * matmax(dA))


def test_n2_eigen_relation(square, rng):
    s = random_state(rng, square, 2)
    p = params(square, 2)
    L, _ = cm.build_lax_t2(s, p)
    for z in cm.spectral_curve(s, p).roots():
        c = cm.null_vector(L - 2 * z * np.eye(2))
        assert matmax(L @ c - 2 * z * c) <= 1e-10 * matmax(L)


# --- accelerations ------------------------------------------------------

def test_accel_trivial_cases(square, rng):
    assert cm.accel_t2(cm.make_state([0.2], [1.0]), params(square, 1)) == pytest.approx([0])
    a = cm.accel_t2(random_state(rng, square, 2), params(square, 2))
    assert a[0] == pytest.approx(-a[1], rel=1e-13)


def test_accel_matches_lax_diagonal(lattice, rng):
    s = random_state(rng, lattice, 3)
    p = params(lattice, 3)
    zero_acc = np.zeros(3, dtype=complex)
    diag_part = np.diag(cm.lax_equation_residual(s, p, zero_acc))
    # with zero accelerations the diagonal of dL/dt - [M, L] is 4 hbar^2 D'
    assert np.allclose(diag_part, cm.accel_t2(s, p), rtol=1e-11)


def test_accel_scales_with_hbar_squared(square, rng):
    s = random_state(rng, square, 4)
    a1 = cm.accel_t2(s, params(square, 4, hbar=1.0))
    a2 = cm.accel_t2(s, params(square, 4, hbar=2.0))
    assert np.array_equal(a2, 4 * a1)


def test_collision_error(square):
    with pytest.raises(CollisionError):
        cm.accel_t2(cm.make_state([0.1, 0.1 + 2 * square.omega], [0, 0]), params(square, 2))


def test_make_state_shape_error():
    with pytest.raises(ValueError):
        cm.make_state([0.1, 0.2], [1.0])


# --- zero-matrix identity -------------------------------------------------

def test_identity_residual_n1(square):
    r = cm.lax_identity_residual(cm.make_state([0.3], [1.1]), params(square, 1))
    assert r.shape == (1, 1) and abs(r[0, 0]) <= 1e-15


@pytest.mark.parametrize("n", [2, 4, 6])
@pytest.mark.parametrize("hbar", [1.0, 0.6 + 0.2j])
def test_identity_residual_vanishes(lattice, rng, n, hbar):
    p = params(lattice, n, hbar=hbar, c_quad=0.2)
    for lam in LAMS:
        s = random_state(rng, lattice, n)
        L, M = cm.build_lax_t2(s, p, lam=lam)
        scale = matmax(cm.commutator(M, L)) + matmax(cm.accel_t2(s, p))
        assert matmax(cm.lax_identity_residual(s, p, lam=lam)) <= 1e-10 * max(1.0, scale)


def test_equation_residual_offdiagonal_vanishes(square, rng):
    s = random_state(rng, square, 4)
    p = params(square, 4)
    r = cm.lax_equation_residual(s, p, cm.accel_t2(s, p))
    assert matmax(r) <= 1e-10 * max(1.0, matmax(cm.accel_t2(s, p)))
    wrong = cm.lax_equation_residual(s, p, cm.accel_t2(s, p) + 0.1)
    assert matmax(wrong) >= 0.05


# --- Hamiltonians -------------------------------------------------------

def test_hamiltonians_single(square):
    s = cm.make_state([0.2], [0.6 + 0.2j])
    h1, h2, h3 = cm.hamiltonians(s, params(square, 1))
    p1 = (0.6 + 0.2j) / 2
    assert (h1, h2, h3) == pytest.approx((-p1, p1 ** 2, -p1 ** 3))


@pytest.mark.parametrize("hbar", [1.0, 0.7])
def test_trace_forms_match_direct(lattice, rng, hbar):
    s = random_state(rng, lattice, 3)
    p = params(lattice, 3, hbar=hbar)
    for lam in LAMS:
        direct, traced = cm.hamiltonians(s, p, lam=lam, trace_forms=True)
        for a, b in zip(direct, traced):
            assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_h2_conserved_along_t2(square):
    rng = np.random.default_rng(0)
    s = random_state(rng, square, 3)
    p = params(square, 3)
    traj = dyn.integrate(cm.t2_rhs(p), cm.pack(s.x, s.v), 1.0,
                         invariants={f"H{k + 1}": (lambda y, k=k: cm.hamiltonians(cm.make_state(*cm.unpack(y)), p)[k])
                                     for k in range(3)})
    rep = dyn.monitor(traj)
    for k in ("H1", "H2", "H3"):
        assert rep[k]["max_rel_drift"] <= 1e-8


# --- t3 flow -------------------------------------------------------------

def test_t3_single_particle(square):
    p = params(square, 1, c_quad=0.25)
    dx, dv = cm.flow_t3(cm.make_state([0.1], [0.8]), p)
    assert dx[0] == pytest.approx(-6 * 0.25 - 0.75 * 0.64)
    assert dv[0] == 0


def test_t3_requires_unit_hbar(square, rng):
    with pytest.raises(ValueError):
        cm.flow_t3(random_state(rng, square, 2), params(square, 2, hbar=2.0))


def test_t3_is_hamiltonian(lattice, rng):
    s = random_state(rng, lattice, 3)
    p = params(lattice, 3, c_quad=0.15)
    dx, dv = cm.flow_t3(s, p)
    h = 1e-6
    for i in range(3):
        e = np.eye(3)[i]

        def H(x, mom):
            return cm.h3_tilde(cm.make_state(x, 2 * mom), p)

        dHdp = (H(s.x, s.p + h * e) - H(s.x, s.p - h * e)) / (2 * h)
        dHdx = (H(s.x + h * e, s.p) - H(s.x - h * e, s.p)) / (2 * h)
        assert abs(dx[i] - dHdp) <= 1e-6 * max(1.0, abs(dx[i]))
        assert abs(dv[i] / 2 + dHdx) <= 1e-6 * max(1.0, abs(dv[i]))


def test_t3_kdv_locus(square):
    # three points in arithmetic progression by 2*omega/3 have vanishing force sums
    x = np.array([0, 2, 4]) * square.omega / 3 + 0.1j
    p = params(square, 3, c_quad=0.1)
    s = cm.make_state(x, [0, 0, 0])
    assert np.max(np.abs(cm.accel_t2(s, p))) <= 1e-10
    dx, _ = cm.flow_t3(s, p)
    assert np.allclose(dx, -0.6 + 3 * pw.wp_matrix(x, square).sum(axis=1), rtol=1e-12)


def test_T_single_particle(square):
    p = params(square, 1, c_quad=0.2, b_quad=0.3)
    s = cm.make_state([0.1], [0.5])
    lam = LAMS[0]
    L, M = cm.build_lax_t2(s, p, lam=lam)
    T = cm.build_T(s, p, lam=lam)
    want = (0.75 * M[0, 0] * L[0, 0] - 0.75 * ell.wp(lam, square) * 0.5
            + 0.5 * (ell.wp(lam, square, 1) + 0.9))
    assert T[0, 0] == pytest.approx(want)


def test_t3_compatibility(lattice, rng):
    s = random_state(rng, lattice, 3)
    p = params(lattice, 3, c_quad=0.1, b_quad=0.2)
    _, dv3 = cm.flow_t3(s, p)
    for lam in LAMS:
        r0 = cm.t3_compatibility(s, p, lam=lam)
        scale = max(1.0, matmax(cm.build_T(s, p, lam=lam)))
        off = r0 - np.diag(np.diag(r0))
        assert matmax(off) <= 1e-10 * scale
        # with zero velocity derivative the diagonal is the t3 acceleration itself
        assert np.allclose(np.diag(r0), dv3, rtol=0, atol=1e-10 * scale)
        assert matmax(cm.t3_compatibility(s, p, lam=lam, dv3=dv3)) <= 1e-10 * scale


# --- spectral curve -----------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_curve_closed_forms(lattice, rng, n):
    p = params(lattice, n)
    for _ in range(3):
        s = random_state(rng, lattice, n)
        for lam in LAMS:
            got = cm.spectral_curve(s, p, lam=lam).coeffs
            want = cm.spectral_curve_closed_form(s, p, lam=lam)
            assert len(got) == n + 1
            assert np.all(np.abs(got - want) <= 1e-9 * np.abs(want) + 1e-12)


def test_curve_n2_leading_terms(square, rng):
    s = random_state(rng, square, 2)
    c = cm.spectral_curve(s, params(square, 2)).coeffs
    assert c[2] == pytest.approx(4)
    assert c[1] == pytest.approx(2 * s.v.sum())


def test_closed_form_n_out_of_range(square, rng):
    with pytest.raises(ValueError):
        cm.spectral_curve_closed_form(random_state(rng, square, 4), params(square, 4))


def test_curve_conserved_along_t3(square):
    rng = np.random.default_rng(1)
    x = pw.random_points(rng, square, 3, min_sep=0.35)
    p = params(square, 3)
    t_end = 0.1
    traj = dyn.integrate(cm.t3_rhs(p), cm.pack(x, pw.random_disk(rng, 3, 0.5)), t_end)

    def state(y):
        return cm.make_state(*cm.unpack(y))

    evals = {f"c{k}": (lambda y, k=k: cm.spectral_curve(state(y), p)[k]) for k in range(3)}
    evals["H1"] = lambda y: cm.hamiltonians(state(y), p)[0]
    evals["H2"] = lambda y: cm.hamiltonians(state(y), p)[1]
    rep = dyn.monitor(traj, evals, stride=max(1, len(traj.states) // 40))
    for name, r in rep.items():
        bound = 1e-6 * t_end if name.startswith("c") else 1e-8
        assert r["max_rel_drift"] <= bound, name


# --- self-dual ------------------------------------------------------------

def test_selfdual_single(square):
    x, y, mu = np.array([0.1 + 0.05j]), np.array([-0.2 + 0.3j]), 0.4
    xd, yd = cm.selfdual_rhs(x, y, mu, square)
    assert xd[0] == pytest.approx(-2 * ell.zeta(x[0] - y[0], square) + mu)
    assert yd[0] == pytest.approx(2 * ell.zeta(y[0] - x[0], square) + mu)


def test_selfdual_swap_symmetry(square, rng):
    pts = pw.random_points(rng, square, 6, min_sep=0.2)
    x, y = pts[:3], pts[3:]
    xd, yd = cm.selfdual_rhs(x, y, 0.3, square)
    yd2, xd2 = cm.selfdual_rhs(y, x, 0.3, square)
    # swapping species reverses the sign of all zeta sums
    assert np.allclose(xd - 0.3, -(xd2 - 0.3))
    assert np.allclose(yd - 0.3, -(yd2 - 0.3))


def test_selfdual_cross_collision(square):
    with pytest.raises(CollisionError):
        cm.selfdual_rhs([0.1, 0.3], [0.1, -0.2], 0.0, square)


def test_selfdual_second_derivative(lattice, rng):
    n = 3
    pts = pw.random_points(rng, lattice, 2 * n, min_sep=0.25)
    x, y = pts[:n], pts[n:]

    def rhs(w):
        return np.concatenate(cm.selfdual_rhs(w[:n], w[n:], 0.2, lattice))

    w0 = np.concatenate([x, y])
    h = 1e-3 / max(1.0, float(np.max(np.abs(rhs(w0)))))
    acc = dyn.second_derivative(rhs, w0, h)
    for part, pos in ((acc[:n], x), (acc[n:], y)):
        want = 4 * pw.wp_matrix(pos, lattice, 1).sum(axis=1)
        assert np.max(np.abs(part - want)) <= 1e-6 * np.max(np.abs(want))
    # chain-rule form agrees as well
    assert np.allclose(cm.selfdual_accel(x, y, 0.2, lattice), 4 * pw.wp_matrix(x, lattice, 1).sum(axis=1),
                       rtol=1e-10)


# --- discrete time -------------------------------------------------------

def _slices(rng, lat, n=3, dt=0.05):
    x = pw.random_points(rng, lat, n, min_sep=0.25)
    v = pw.random_disk(rng, n, 1.0)
    return x - dt * v, x


def test_discrete_step_residual(lattice, rng):
    xp, xc = _slices(rng, lattice)
    xn = cm.discrete_cm_step(xp, xc, lat=lattice)
    assert np.max(np.abs(cm.discrete_cm_residual(xp, xc, xn, lattice))) <= 1e-10


def test_discrete_translation_equivariance(square, rng):
    xp, xc = _slices(rng, square)
    shift = 0.07 - 0.03j
    a = cm.discrete_cm_step(xp, xc, lat=square)
    b = cm.discrete_cm_step(xp + shift, xc + shift, guess=2 * xc - xp + shift, lat=square)
    assert np.allclose(b, a + shift, atol=1e-9)


def test_discrete_time_reversal(square, rng):
    xp, xc = _slices(rng, square)
    xn = cm.discrete_cm_step(xp, xc, lat=square)
    back = cm.discrete_cm_step(xn, xc, guess=xp, lat=square)
    assert np.allclose(back, xp, atol=1e-9)


def test_discrete_lattice_required(square):
    with pytest.raises(ValueError):
        cm.discrete_cm_step([0.1, 0.3], [0.11, 0.31])


def test_newton_no_convergence():
    with pytest.raises(ConvergenceError):
        cm.newton(lambda y: y ** 2 + 1, lambda y: np.diag(2 * y), np.array([0.5 + 0j]), max_iter=3)


# --- wave function ---------------------------------------------------------

def test_wave_single_pole_exact(square):
    z = 0.3 + 0.2j
    s = cm.make_state([0.1 - 0.05j], [-2 * z])
    p = params(square, 1)
    assert abs(cm.wave_residual_t2(s, p, z, x_eval=0.35 + 0.2j)) <= 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_wave_residual_on_curve(lattice, rng, n):
    s = random_state(rng, lattice, n)
    p = params(lattice, n, c_quad=0.1)
    roots = np.roots(cm.spectral_curve_closed_form(s, p)[::-1])
    avoid = pw.random_points(rng, lattice, 10, min_sep=0.01)
    for z in roots:
        for xe in avoid:
            if np.min(np.abs(ell._reduce_arrays(xe - s.x, lattice)[0])) < 0.1:
                continue
            assert abs(cm.wave_residual_t2(s, p, z, x_eval=xe)) <= 1e-9


def test_wave_perturbed_velocity_control(square, rng):
    s = random_state(rng, square, 2)
    p = params(square, 2)
    z = np.roots(cm.spectral_curve_closed_form(s, p)[::-1])[0]
    xe = 0.31 + 0.27j
    good = abs(cm.wave_residual_t2(s, p, z, x_eval=xe))
    bad = abs(cm.wave_residual_t2(s, p, z, x_eval=xe, v_dyn=s.v + 0.1))
    assert good <= 1e-9 and bad >= 1e-4


def test_wave_off_curve(square, rng):
    s = random_state(rng, square, 2)
    with pytest.raises(NotOnCurveError):
        cm.wave_residual_t2(s, params(square, 2), 5.0 + 3j, x_eval=0.3)


def test_configuration_distance(square):
    a = np.array([0.1, 0.3 + 0.2j, -0.2j])
    b = np.array([-0.2j + 2 * square.omega_prime, 0.1 - 2 * square.omega, 0.3 + 0.2j + 1e-7])
    assert pw.configuration_distance(a, b, square) == pytest.approx(1e-7, rel=1e-6)
    with pytest.raises(ValueError):
        pw.configuration_distance(a, b[:2], square)


def test_flows_commute_as_configurations(square):
    rng = np.random.default_rng(0)
    s = random_state(rng, square, 3)
    p = params(square, 3)
    y0 = cm.pack(s.x, s.v)
    f2, f3 = cm.t2_rhs(p), cm.t3_rhs(p)
    h = 0.01
    a = dyn.integrate(f3, dyn.integrate(f2, y0, h).final, h).final
    b = dyn.integrate(f2, dyn.integrate(f3, y0, h).final, h).final
    assert pw.configuration_distance(a[:3], b[:3], square) <= 1e-8
