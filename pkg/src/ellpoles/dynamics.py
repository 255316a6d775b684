"""Adaptive Dormand-Prince 5(4) integration of autonomous complex flows.

The state is a flat complex vector ``y`` and ``rhs(y)`` its derivative.
The error norm is the RMS over the real and imaginary parts of all
components, each scaled by ``abs_tol + rel_tol * max(|y_old|, |y_new|)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import CollisionError, StepUnderflowError

__all__ = ["Trajectory", "integrate", "integrate_fixed", "monitor", "sample_indices", "second_derivative",
           "DEFAULT_RTOL", "DEFAULT_ATOL"]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
H_MIN = 1e-12

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B4

# PI controller gains (Hairer & Wanner, DOPRI5 defaults)
_ALPHA = 0.2 - 0.04 * 0.75
_BETA = 0.04
_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    invariants: dict = field(default_factory=dict)
    rejected: int = 0
    accepted: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _step(rhs, y, h, k1):
    k = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * kj for a, kj in zip(_A[i], k))
        k.append(np.asarray(rhs(yi), dtype=complex))
    y_new = y + h * sum(b * kj for b, kj in zip(_B, k) if b != 0)
    err = h * sum(e * kj for e, kj in zip(_E, k) if e != 0)
    return y_new, err, k[6]


def _err_norm(err, y, y_new, rel_tol, abs_tol):
    sc = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    parts = np.concatenate([(err.real / sc), (err.imag / sc)])
    return float(np.sqrt(np.mean(parts ** 2))) if parts.size else 0.0


def _initial_step(rhs, y, f0, direction, rel_tol, abs_tol):
    sc = abs_tol + rel_tol * np.abs(y)
    d0 = np.sqrt(np.mean(np.abs(y / sc) ** 2)) if y.size else 0.0
    d1 = np.sqrt(np.mean(np.abs(f0 / sc) ** 2)) if y.size else 0.0
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + direction * h0 * f0
    f1 = np.asarray(rhs(y1), dtype=complex)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / sc) ** 2)) / h0 if y.size else 0.0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0,
    t_end: float,
    rel_tol: float = DEFAULT_RTOL,
    abs_tol: float = DEFAULT_ATOL,
    t0: float = 0.0,
    guard: Callable[[np.ndarray], None] | None = None,
    invariants: Mapping[str, Callable[[np.ndarray], complex]] | None = None,
    h0: float | None = None,
    max_steps: int = 1_000_000,
) -> Trajectory:
    """Integrate ``y' = rhs(y)`` from ``t0`` to ``t_end`` (either direction).

    ``guard(y)`` is called on every candidate state before it is accepted
    and should raise :class:`CollisionError`; ``invariants`` are evaluated
    at every accepted state and stored in the trajectory.
    """
    y = np.array(y0, dtype=complex)
    span = float(t_end) - float(t0)
    direction = 1.0 if span >= 0 else -1.0
    invariants = dict(invariants or {})
    if guard is not None:
        guard(y)
    f = np.asarray(rhs(y), dtype=complex)
    if not np.all(np.isfinite(f)):
        raise FloatingPointError("rhs is not finite at the initial state")

    times = [float(t0)]
    states = [y.copy()]
    logs = {k: [complex(fn(y))] for k, fn in invariants.items()}
    traj = Trajectory(np.array([]), np.array([]))
    if span == 0:
        traj.times, traj.states = np.array(times), np.array(states)
        traj.invariants = {k: np.array(v) for k, v in logs.items()}
        return traj

    h = abs(h0) if h0 else _initial_step(rhs, y, f, direction, rel_tol, abs_tol)
    t = float(t0)
    err_prev = 1e-4
    for _ in range(max_steps):
        remaining = abs(t_end - t)
        if remaining <= 1e-15 * max(1.0, abs(t_end)):
            break
        last = h >= remaining
        if last:
            h = remaining
        if h < H_MIN and not last:
            raise StepUnderflowError(f"step size {h:.3g} below {H_MIN:g} at t = {t:.6g}")
        try:
            y_new, err, f_new = _step(rhs, y, direction * h, f)
            finite = np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))
        except (CollisionError, FloatingPointError, ZeroDivisionError):
            finite = False
        if finite and guard is not None:
            guard(y_new)
        en = _err_norm(err, y, y_new, rel_tol, abs_tol) if finite else np.inf
        if en <= 1.0:
            t = t_end if last else t + direction * h
            y, f = y_new, f_new
            times.append(float(t))
            states.append(y.copy())
            for k, fn in invariants.items():
                logs[k].append(complex(fn(y)))
            traj.accepted += 1
            if en == 0:
                fac = _FAC_MAX
            else:
                fac = _SAFETY * en ** (-_ALPHA) * err_prev ** _BETA
                fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            err_prev = max(en, 1e-4)
            h = h * fac
        else:
            traj.rejected += 1
            if np.isfinite(en):
                h = h * max(_FAC_MIN, _SAFETY * en ** (-0.2))
            else:
                h = h * 0.25
            if h < H_MIN:
                raise StepUnderflowError(f"step size {h:.3g} below {H_MIN:g} at t = {t:.6g}")
    else:
        raise StepUnderflowError(f"maximum number of steps ({max_steps}) reached")

    traj.times = np.array(times)
    traj.states = np.array(states)
    traj.invariants = {k: np.array(v) for k, v in logs.items()}
    return traj


def integrate_fixed(rhs, y0, t_end: float, n_steps: int, t0: float = 0.0) -> np.ndarray:
    """Fifth-order solution with ``n_steps`` equal steps; returns the endpoint."""
    y = np.array(y0, dtype=complex)
    h = (t_end - t0) / n_steps
    f = np.asarray(rhs(y), dtype=complex)
    for _ in range(n_steps):
        y, _, f = _step(rhs, y, h, f)
    return y


def sample_indices(count: int, stride: int = 1) -> np.ndarray:
    """Every ``stride``-th index of ``range(count)``, always including the last."""
    idx = np.arange(0, count, max(1, int(stride)))
    if count and idx[-1] != count - 1:
        idx = np.append(idx, count - 1)
    return idx


def monitor(traj: Trajectory, evaluators: Mapping[str, Callable[[np.ndarray], complex]] | None = None,
            stride: int = 1) -> dict:
    """Drift statistics of invariants relative to their initial values.

    Uses the values logged during integration, plus any extra
    ``evaluators`` applied to every ``stride``-th stored state (the final
    state is always included).
    """
    series = dict(traj.invariants)
    idx = sample_indices(len(traj.states), stride)
    for name, fn in (evaluators or {}).items():
        series[name] = np.array([complex(fn(traj.states[i])) for i in idx])
    report = {}
    for name, vals in series.items():
        vals = np.asarray(vals, dtype=complex)
        v0 = vals[0]
        dev = np.abs(vals - v0)
        max_abs = float(np.max(dev)) if dev.size else 0.0
        ref = abs(v0)
        report[name] = {
            "initial": v0,
            "max_abs_drift": max_abs,
            "max_rel_drift": float(max_abs / ref) if ref > 0 else max_abs,
        }
    return report


def second_derivative(rhs, y0, h: float, substeps: int = 16, richardson: bool = True) -> np.ndarray:
    """``y''(0)`` from the integrated flow by central second differences.

    ``y(+h)`` and ``y(-h)`` come from :func:`integrate_fixed`; with
    ``richardson`` the steps ``h`` and ``h/2`` are combined to cancel the
    ``O(h^2)`` term.
    """
    y0 = np.asarray(y0, dtype=complex)

    def d2(step):
        yp = integrate_fixed(rhs, y0, step, substeps)
        ym = integrate_fixed(rhs, y0, -step, substeps)
        return (yp - 2 * y0 + ym) / step ** 2

    if not richardson:
        return d2(h)
    return (4 * d2(h / 2) - d2(h)) / 3
