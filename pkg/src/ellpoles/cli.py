"""Command line scenario runner.

``ellpoles <command> --config scenario.json [--seed N] [--out DIR] [--tol-override T]``

Commands: ``verify-identities``, ``simulate``, ``spectral-curve``,
``selfdual``, ``discrete`` and ``wave-residual``.  Each writes
``report.json`` (and ``trajectory.csv`` for ``simulate``) to the output
directory.  Exit status is 0 when every check passes, 1 when a check fails
and 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys

import numpy as np

from . import __version__
from . import bkp
from . import calogero as cm
from . import dynamics as dyn
from . import elliptic as ell
from . import identities
from . import pairwise as pw
from . import ruijsenaars as rs
from .errors import EllPolesError, LatticeError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SYSTEMS = ("cm-kp", "bkp", "nv", "toda-rs", "selfdual-cm", "selfdual-bkp", "selfdual-rs")
COMMANDS = ("verify-identities", "simulate", "spectral-curve", "selfdual", "discrete", "wave-residual")
_SUPPORTED = {
    "verify-identities": SYSTEMS,
    "simulate": ("cm-kp", "bkp", "nv", "toda-rs"),
    "spectral-curve": ("cm-kp", "bkp", "toda-rs"),
    "selfdual": ("selfdual-cm", "selfdual-bkp", "selfdual-rs"),
    "discrete": ("cm-kp", "toda-rs"),
    "wave-residual": ("cm-kp", "toda-rs"),
}
_TOP_KEYS = {"system", "lattice", "particles", "initial", "eta", "lambda", "z", "mu", "hbar", "c", "b",
             "gamma", "r", "time", "checks", "trials"}
_LATTICE_KEYS = ("omega_re", "omega_im", "omega_prime_re", "omega_prime_im")
_INITIAL_KEYS = {"positions", "velocities", "zeros", "seed"}
_TIME_KEYS = {"t_end", "rel_tol", "abs_tol", "dt", "steps"}

# default tolerances per check family
TOL_IDENTITY = 1e-10
TOL_HAMILTONIAN = 1e-8
TOL_CURVE_DRIFT = 1e-6
TOL_CURVE_FORM = 1e-9
TOL_SELFDUAL = 1e-6
TOL_NEWTON = 1e-10
TOL_WAVE = 1e-9
MIN_CONTROL = 1e-4


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# --- configuration ---------------------------------------------------------

def _offending_key(text: str, pos: int) -> str:
    keys = re.findall(r'"((?:[^"\\]|\\.)*)"\s*:', text[:pos])
    return keys[-1] if keys else "<top level>"


def parse_config_text(text: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        key = _offending_key(text, exc.pos)
        raise ConfigError(key, f"malformed JSON at line {exc.lineno} column {exc.colno} "
                               f"after key '{key}': {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("<top level>", "the configuration must be a JSON object")
    return cfg


def _number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(key, f"expected a finite number, got {value!r}")
    return float(value)


def _complex(value, key: str) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(key, "a complex number is [re, im]")
        return complex(_number(value[0], key), _number(value[1], key))
    if isinstance(value, dict):
        if set(value) - {"re", "im"}:
            raise ConfigError(key, "a complex object has keys 're' and 'im' only")
        return complex(_number(value.get("re", 0.0), key + ".re"), _number(value.get("im", 0.0), key + ".im"))
    return complex(_number(value, key))


def _complex_list(value, key: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "expected a non-empty list")
    return np.array([_complex(v, f"{key}[{i}]") for i, v in enumerate(value)], dtype=complex)


def _int(value, key: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(key, f"expected an integer >= {minimum}, got {value!r}")
    return value


class Scenario:
    """Validated configuration with defaults filled in."""

    def __init__(self, cfg: dict, seed: int | None = None, needs_state: bool = True):
        unknown = sorted(set(cfg) - _TOP_KEYS)
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        if "system" not in cfg:
            raise ConfigError("system", "missing required key")
        self.system = cfg["system"]
        if self.system not in SYSTEMS:
            raise ConfigError("system", f"must be one of {', '.join(SYSTEMS)}")

        lat_cfg = cfg.get("lattice", {"omega_re": 0.5, "omega_im": 0.0, "omega_prime_re": 0.0, "omega_prime_im": 0.5})
        if not isinstance(lat_cfg, dict):
            raise ConfigError("lattice", "expected an object")
        bad = sorted(set(lat_cfg) - set(_LATTICE_KEYS))
        if bad:
            raise ConfigError(f"lattice.{bad[0]}", "unknown key")
        vals = {k: _number(lat_cfg.get(k, 0.0), f"lattice.{k}") for k in _LATTICE_KEYS}
        try:
            self.lattice = ell.Lattice(complex(vals["omega_re"], vals["omega_im"]),
                                       complex(vals["omega_prime_re"], vals["omega_prime_im"]))
        except LatticeError as exc:
            raise ConfigError("lattice", str(exc)) from None

        self.eta = _complex(cfg.get("eta", [0.13, 0.07]), "eta")
        self.lam = _complex(cfg.get("lambda", [0.37, 0.21]), "lambda")
        self.z = _complex(cfg.get("z", [0.3, 0.2]), "z")
        self.mu = _complex(cfg.get("mu", [0.3, 0.1]), "mu")
        self.hbar = _complex(cfg.get("hbar", 1.0), "hbar")
        self.c = _complex(cfg.get("c", 0.0), "c")
        self.b = _complex(cfg.get("b", 0.0), "b")
        self.gamma = _complex(cfg.get("gamma", 0.0), "gamma")
        self.r = _complex(cfg.get("r", 0.0), "r")
        if self.hbar == 0:
            raise ConfigError("hbar", "must be nonzero")
        self.trials = _int(cfg.get("trials", 100), "trials", 1)

        tcfg = cfg.get("time", {})
        if not isinstance(tcfg, dict):
            raise ConfigError("time", "expected an object")
        bad = sorted(set(tcfg) - _TIME_KEYS)
        if bad:
            raise ConfigError(f"time.{bad[0]}", "unknown key")
        self.t_end = _number(tcfg.get("t_end", 1.0), "time.t_end")
        self.rel_tol = _number(tcfg.get("rel_tol", dyn.DEFAULT_RTOL), "time.rel_tol")
        self.abs_tol = _number(tcfg.get("abs_tol", dyn.DEFAULT_ATOL), "time.abs_tol")
        self.dt = _number(tcfg.get("dt", 0.05), "time.dt")
        self.steps = _int(tcfg.get("steps", 3), "time.steps", 1)
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ConfigError("time.rel_tol" if self.rel_tol <= 0 else "time.abs_tol", "must be positive")

        checks = cfg.get("checks")
        if checks is not None and (not isinstance(checks, list) or not all(isinstance(c, str) for c in checks)):
            raise ConfigError("checks", "expected a list of check names")
        self.checks = checks

        icfg = cfg.get("initial", {})
        if not isinstance(icfg, dict):
            raise ConfigError("initial", "expected an object")
        bad = sorted(set(icfg) - _INITIAL_KEYS)
        if bad:
            raise ConfigError(f"initial.{bad[0]}", "unknown key")
        self.seed = seed if seed is not None else _int(icfg.get("seed", 0), "initial.seed")
        self.rng = np.random.default_rng(self.seed)

        n_cfg = cfg.get("particles")
        if not needs_state:
            self.n = 0 if n_cfg is None else _int(n_cfg, "particles", 1)
            self.x = self.v = self.y = None
            return
        if "positions" in icfg:
            self.x = _complex_list(icfg["positions"], "initial.positions")
            if n_cfg is not None and _int(n_cfg, "particles", 1) != len(self.x):
                raise ConfigError("particles", "does not match the number of positions")
            self.n = len(self.x)
        else:
            if n_cfg is None:
                raise ConfigError("particles", "missing (required without explicit positions)")
            self.n = _int(n_cfg, "particles", 1)
            self.x = None
        if "velocities" in icfg:
            self.v = _complex_list(icfg["velocities"], "initial.velocities")
            if len(self.v) != self.n:
                raise ConfigError("initial.velocities", "length differs from the number of particles")
        else:
            self.v = None
        self.y = _complex_list(icfg["zeros"], "initial.zeros") if "zeros" in icfg else None
        if self.y is not None and len(self.y) != self.n:
            raise ConfigError("initial.zeros", "length differs from the number of particles")
        self._fill_initial()

    def _avoid(self):
        return (self.eta, -self.eta) if self.system in ("toda-rs", "selfdual-rs") else ()

    def _fill_initial(self):
        lat = self.lattice
        if self.system.startswith("selfdual"):
            if self.x is None or self.y is None:
                pts = pw.random_points(self.rng, lat, 2 * self.n, min_sep=0.2, avoid=self._avoid())
                self.x = pts[: self.n] if self.x is None else self.x
                self.y = pts[self.n:] if self.y is None else self.y
            try:
                pw.check_distinct(self.x, lat)
                pw.check_distinct(self.y, lat)
                pw.check_cross(self.x, self.y, lat)
            except EllPolesError as exc:
                raise ConfigError("initial", f"invalid poles and zeros: {exc}") from None
            return
        if self.x is None:
            self.x = pw.random_points(self.rng, lat, self.n, min_sep=0.25, avoid=self._avoid())
        if self.v is None:
            self.v = pw.random_disk(self.rng, self.n, 1.0)
        try:
            pw.check_distinct(self.x, lat, shifts=self._avoid())
        except EllPolesError as exc:
            raise ConfigError("initial.positions", str(exc)) from None
        if self.system in ("nv", "toda-rs") and np.any(self.v == 0):
            raise ConfigError("initial.velocities", "all velocities must be nonzero for this system")

    # parameter objects
    def cm_params(self):
        return cm.CMParams(self.n, self.lattice, hbar=self.hbar, c_quad=self.c, b_quad=self.b,
                           lambda_default=self.lam)

    def rs_params(self):
        return rs.RSParams(self.n, self.lattice, self.eta, lambda_default=self.lam, c_quad=self.c,
                           r_coeff=self.r)

    def nv_params(self):
        return bkp.NVParams(self.lattice, self.gamma)


# --- report helpers --------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class Checks:
    """Collect named checks; ``override`` replaces every upper-bound tolerance."""

    def __init__(self, selected=None, override=None):
        self.items: dict[str, dict] = {}
        self.selected = None if selected is None else set(selected)
        self.override = override

    def wanted(self, name: str) -> bool:
        return self.selected is None or name in self.selected

    def upper(self, name: str, value: float, tol: float):
        if not self.wanted(name):
            return
        tol = self.override if self.override is not None else tol
        value = float(value)
        self.items[name] = {"kind": "max", "value": value, "tolerance": tol,
                            "passed": bool(math.isfinite(value) and value <= tol)}

    def lower(self, name: str, value: float, bound: float):
        if not self.wanted(name):
            return
        value = float(value)
        self.items[name] = {"kind": "min", "value": value, "tolerance": bound,
                            "passed": bool(math.isfinite(value) and value >= bound)}

    def fail(self, name: str, message: str):
        self.items[name] = {"kind": "error", "value": None, "tolerance": None, "passed": False,
                            "message": message}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.items.values())


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-300))


def _eval_points(rng, sc: Scenario, count: int, min_dist: float = 0.1) -> np.ndarray:
    lat = sc.lattice
    out = []
    while len(out) < count:
        p = pw.random_offlattice(rng, lat, min_dist)
        if pw.min_reduced_distance(p - sc.x, lat) >= min_dist * lat.pole_scale:
            out.append(p)
    return np.array(out)


# --- commands --------------------------------------------------------------

def cmd_verify_identities(sc: Scenario, checks: Checks, out_dir: str) -> dict:
    res = identities.identity_suite([sc.lattice], trials=sc.trials, seed=sc.seed)
    res.pop("_seconds", None)
    for name, val in res.items():
        checks.upper(f"identity_{name}", val, TOL_IDENTITY)
    return {"max_relative_residual": res, "trials": sc.trials}


def _system_setup(sc: Scenario):
    """``(rhs, guard, cheap invariants, expensive invariants, state names)`` for ``simulate``."""
    n, lat = sc.n, sc.lattice
    pairs = [(sc.z, sc.lam), (1.1 + 0.0j, 0.2 - 0.3j), (0.7 - 0.4j, 0.31 + 0.12j)]

    def split(y):
        return y[:n], y[n:]

    if sc.system == "cm-kp":
        p = sc.cm_params()
        state = lambda y: cm.make_state(*split(y))  # noqa: E731

        def guard(y):
            pw.check_distinct(y[:n], lat)
        cheap = {f"H{k + 1}": (lambda y, k=k: cm.hamiltonians(state(y), p)[k]) for k in range(3)}
        costly = {f"curve_c{k}": (lambda y, k=k: cm.spectral_curve(state(y), p)[k]) for k in range(n + 1)}
        return cm.t2_rhs(p), guard, cheap, costly, TOL_HAMILTONIAN
    if sc.system == "bkp":
        state = lambda y: bkp.bkp_state(*split(y))  # noqa: E731

        def guard(y):
            pw.check_distinct(y[:n], lat)
        keys = ["I1", "I2", "J"] + (["I3"] if n == 3 else [])
        cheap = {k: (lambda y, k=k: bkp.integrals_bkp(state(y), lat)[k]) for k in keys}
        costly = {f"curve_R{j}": (lambda y, zl=zl: bkp.curve_value_bkp(state(y), lat, *zl))
                  for j, zl in enumerate(pairs)}
        return bkp.bkp_rhs(lat), guard, cheap, costly, TOL_HAMILTONIAN
    if sc.system == "nv":
        p = sc.nv_params()
        state = lambda y: bkp.nv_state(*split(y))  # noqa: E731

        def guard(y):
            pw.check_distinct(y[:n], lat)
        costly = {f"curve_R{j}": (lambda y, zl=zl: bkp.nv_curve_value(state(y), p, *zl))
                  for j, zl in enumerate(pairs)}
        return bkp.nv_rhs(p), guard, {}, costly, TOL_HAMILTONIAN
    p = sc.rs_params()
    state = lambda y: rs.rs_state(*split(y))  # noqa: E731

    def guard(y):
        rs.check_state(y[:n], sc.eta, lat)
    cheap = {k: (lambda y, k=k: rs.hamiltonians_rs(state(y), p)[k]) for k in ("H_plus", "H_minus", "trL_ratio")}
    return rs.rs_rhs(sc.eta, lat), guard, cheap, {}, TOL_HAMILTONIAN


def write_trajectory_csv(path: str, traj: dyn.Trajectory, n: int) -> None:
    names = list(traj.invariants)
    head = ["t"]
    head += [f"x{i + 1}_{part}" for i in range(n) for part in ("re", "im")]
    head += [f"v{i + 1}_{part}" for i in range(n) for part in ("re", "im")]
    head += [f"{k}_{part}" for k in names for part in ("re", "im")]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(head) + "\n")
        for j, t in enumerate(traj.times):
            row = [t]
            for val in traj.states[j]:
                row += [val.real, val.imag]
            for k in names:
                val = traj.invariants[k][j]
                row += [val.real, val.imag]
            fh.write(",".join("%.17g" % float(v) for v in row) + "\n")


def cmd_simulate(sc: Scenario, checks: Checks, out_dir: str) -> dict:
    rhs, guard, cheap, costly, tol_h = _system_setup(sc)
    y0 = np.concatenate([sc.x, sc.v])
    traj = dyn.integrate(rhs, y0, sc.t_end, sc.rel_tol, sc.abs_tol, guard=guard, invariants=cheap)
    stride = max(1, len(traj.states) // 40)
    drift = dyn.monitor(traj, costly, stride=stride)
    per_time = max(1.0, abs(sc.t_end))
    for name, d in drift.items():
        if name.startswith("curve"):
            checks.upper(f"drift_{name}", d["max_rel_drift"] / per_time, TOL_CURVE_DRIFT)
        else:
            checks.upper(f"drift_{name}", d["max_rel_drift"], tol_h)
    write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), traj, sc.n)
    return {
        "drift": drift,
        "accepted_steps": traj.accepted,
        "rejected_steps": traj.rejected,
        "final_positions": traj.final[: sc.n],
        "final_velocities": traj.final[sc.n:],
        "trajectory_csv": "trajectory.csv",
    }


def cmd_spectral_curve(sc: Scenario, checks: Checks, out_dir: str) -> dict:
    n, lat = sc.n, sc.lattice
    rng = np.random.default_rng(sc.seed + 1)
    probes = 0.5 * (rng.normal(size=3) + 1j * rng.normal(size=3))
    out = {}
    if sc.system == "cm-kp":
        p = sc.cm_params()
        s = cm.make_state(sc.x, sc.v)
        poly = cm.spectral_curve(s, p)
        L, _ = cm.build_lax_t2(s, p)
        direct = [np.linalg.det(2 * z * np.eye(n) - L) for z in probes]
        if n in (2, 3) and sc.hbar == 1 and sc.c == 0:
            closed = cm.spectral_curve_closed_form(s, p)
            out["closed_form"] = closed
            checks.upper("closed_form", _rel(poly.coeffs, closed), TOL_CURVE_FORM)
    elif sc.system == "bkp":
        s = bkp.bkp_state(sc.x, sc.v)
        poly = bkp.spectral_curve_bkp(s, lat, sc.lam)
        direct = [bkp.curve_value_bkp(s, lat, z, sc.lam) for z in probes]
        if n in (2, 3):
            closed = bkp.spectral_curve_bkp_closed_form(s, lat, sc.lam)
            out["closed_form"] = closed
            checks.upper("closed_form", _rel(poly.coeffs, closed), TOL_CURVE_FORM)
    else:
        p = sc.rs_params()
        s = rs.rs_state(sc.x, sc.v)
        poly = rs.spectral_curve_rs(s, p)
        L, _ = rs.build_lax_rs(s, p)
        direct = [np.linalg.det(z * np.eye(n) - L) for z in probes]
    checks.upper("interpolation", _rel([poly(z) for z in probes], direct), TOL_CURVE_FORM)
    out.update({"coefficients": poly.coeffs, "lambda": sc.lam, "probe_points": probes})
    return out


def cmd_selfdual(sc: Scenario, checks: Checks, out_dir: str) -> dict:
    n, lat = sc.n, sc.lattice
    if sc.system == "selfdual-cm":
        rhs0 = lambda xx, yy: cm.selfdual_rhs(xx, yy, sc.mu, lat)  # noqa: E731
    elif sc.system == "selfdual-bkp":
        rhs0 = lambda xx, yy: bkp.selfdual_rhs_bkp(xx, yy, sc.mu, lat)  # noqa: E731
    else:
        rs.check_state(sc.x, sc.eta, lat)
        rhs0 = lambda xx, yy: rs.selfdual_rhs_rs(xx, yy, sc.mu, sc.eta, lat)  # noqa: E731

    def rhs(w):
        return np.concatenate(rhs0(w[:n], w[n:]))

    w0 = np.concatenate([sc.x, sc.y])
    vel = rhs(w0)
    h = 1e-3 / max(1.0, float(np.max(np.abs(vel))))
    acc = dyn.second_derivative(rhs, w0, h)
    xdot = vel[:n]
    out = {"step": h, "xdot": xdot}
    if sc.system == "selfdual-cm":
        target_x = 4 * pw.wp_matrix(sc.x, lat, 1).sum(axis=1)
        target_y = 4 * pw.wp_matrix(sc.y, lat, 1).sum(axis=1)
        checks.upper("selfdual_x", _rel(acc[:n], target_x), TOL_SELFDUAL)
        checks.upper("selfdual_y", _rel(acc[n:], target_y), TOL_SELFDUAL)
    elif sc.system == "selfdual-bkp":
        target_x = bkp.accel_bkp(bkp.bkp_state(sc.x, xdot), lat)
        checks.upper("selfdual_x", _rel(acc[:n], target_x), TOL_SELFDUAL)
    else:
        target_x = rs.accel_rs(rs.rs_state(sc.x, xdot), sc.eta, lat)
        checks.upper("selfdual_x", _rel(acc[:n], target_x), TOL_SELFDUAL)
    out.update({"xddot_finite_difference": acc[:n], "xddot_target": target_x})
    return out


def cmd_discrete(sc: Scenario, checks: Checks, out_dir: str) -> dict:
    lat = sc.lattice
    prev, cur = sc.x - sc.dt * sc.v, sc.x.copy()
    slices, residuals = [prev, cur], []
    for _ in range(sc.steps):
        if sc.system == "cm-kp":
            nxt = cm.discrete_cm_step(prev, cur, lat=lat)
            r = cm.discrete_cm_residual(prev, cur, nxt, lat)
        else:
            nxt = rs.discrete_rs_step(prev, cur, eta=sc.eta, lat=lat)
            r = rs.discrete_rs_residual(prev, cur, nxt, sc.eta, lat)
        residuals.append(float(np.max(np.abs(r))))
        slices.append(nxt)
        prev, cur = cur, nxt
    checks.upper("newton_residual", max(residuals), TOL_NEWTON)
    return {"slices": slices, "residuals": residuals, "dt": sc.dt}


def cmd_wave_residual(sc: Scenario, checks: Checks, out_dir: str) -> dict:
    rng = np.random.default_rng(sc.seed + 2)
    pts = _eval_points(rng, sc, 10)
    if sc.system == "cm-kp":
        p = sc.cm_params()
        s = cm.make_state(sc.x, sc.v)
        L, _ = cm.build_lax_t2(s, p)
        zs = np.linalg.eigvals(L) / 2
        fn = cm.wave_residual_t2
    else:
        p = sc.rs_params()
        s = rs.rs_state(sc.x, sc.v)
        L, _ = rs.build_lax_rs(s, p)
        zs = np.linalg.eigvals(L)
        fn = rs.wave_residual_rs
    z = complex(zs[np.argmin(np.abs(zs - sc.z))])
    res = [abs(fn(s, p, z, x_eval=xe)) for xe in pts]
    ctrl = [abs(fn(s, p, z, x_eval=xe, v_dyn=s.v + 0.1)) for xe in pts]
    checks.upper("wave_residual", max(res), TOL_WAVE)
    checks.lower("perturbed_control", min(ctrl), MIN_CONTROL)
    return {"z": z, "eval_points": pts, "residuals": res, "control_residuals": ctrl}


_HANDLERS = {
    "verify-identities": cmd_verify_identities,
    "simulate": cmd_simulate,
    "spectral-curve": cmd_spectral_curve,
    "selfdual": cmd_selfdual,
    "discrete": cmd_discrete,
    "wave-residual": cmd_wave_residual,
}


def config_digest(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def run(command: str, cfg: dict, seed: int | None = None, out_dir: str = ".",
        tol_override: float | None = None) -> tuple[int, dict]:
    """Run one command on a parsed configuration; returns ``(exit code, report)``.

    Raises :class:`ConfigError` for invalid configurations.
    """
    if command not in _HANDLERS:
        raise ConfigError("command", f"unknown command {command!r}")
    sc = Scenario(cfg, seed, needs_state=command != "verify-identities")
    if sc.system not in _SUPPORTED[command]:
        raise ConfigError("system", f"'{sc.system}' is not supported by {command}")
    os.makedirs(out_dir, exist_ok=True)
    checks = Checks(sc.checks, tol_override)
    try:
        results = _HANDLERS[command](sc, checks, out_dir)
    except EllPolesError as exc:
        results = {}
        checks.fail("run", f"{type(exc).__name__}: {exc}")
    report = {
        "command": command,
        "system": sc.system,
        "version": __version__,
        "config_sha256": config_digest(cfg),
        "seed": sc.seed,
        "tolerance_override": tol_override,
        "initial_positions": sc.x,
        "results": results,
        "checks": checks.items,
        "passed": checks.passed,
    }
    report = _jsonable(report)
    with open(os.path.join(out_dir, "report.json"), "w", newline="\n") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return (EXIT_OK if checks.passed else EXIT_FAIL), report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ellpoles", description="Elliptic pole dynamics scenario runner")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, metavar="PATH", help="JSON scenario file")
    ap.add_argument("--seed", type=int, default=None, help="overrides initial.seed")
    ap.add_argument("--out", default=".", metavar="DIR", help="output directory (default: .)")
    ap.add_argument("--tol-override", type=float, default=None, metavar="FLOAT",
                    help="replace every upper-bound check tolerance")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config_text(text)
        code, report = run(args.command, cfg, args.seed, args.out, args.tol_override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, c in report["checks"].items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name} value={c['value']} tol={c['tolerance']}")
    print("passed" if report["passed"] else "failed")
    return code


if __name__ == "__main__":
    sys.exit(main())
