"""Adaptive Dormand-Prince 5(4) integration and the built-in benchmark systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IntegrationError, InvalidArgument

# Dormand-Prince tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4
# Shampine's quartic continuous extension; columns multiply theta^1..theta^4
_DENSE = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR, _MAX_FACTOR = 0.2, 10.0
# PI controller exponents (Hairer & Wanner, order 5 pair)
_ALPHA_I, _BETA_P = 0.7 / 5, 0.4 / 5


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # (len(t), n)
    n_steps: int = 0
    n_rejected: int = 0


def _stages(rhs, t, y, h, k0):
    K = np.empty((7, y.size))
    K[0] = k0
    for s in range(1, 7):
        K[s] = rhs(t + _C[s] * h, y + h * (np.asarray(_A[s]) @ K[:s]))
    return K


def integrate(rhs: Callable[[float, np.ndarray], np.ndarray], y0, t_span,
              rtol: float = 1e-9, atol: float = 1e-9, dense_times=None,
              first_step: float | None = None, max_step: float = np.inf,
              fixed_step: float | None = None) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` over ``t_span``.

    Returns the solution at ``dense_times`` (via the quartic interpolant) when
    given, else at every accepted step. ``fixed_step`` disables error control,
    which is only meant for convergence-order studies.
    """
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise InvalidArgument(f"t_span must be increasing, got {t_span}")
    y = np.asarray(y0, dtype=float).copy()
    f = np.asarray(rhs(t0, y), dtype=float)
    if not np.all(np.isfinite(f)):
        raise InvalidArgument("rhs is not finite at the initial state")

    if dense_times is not None:
        dense_times = np.asarray(dense_times, dtype=float)
        if np.any(np.diff(dense_times) < 0) or dense_times[0] < t0 or dense_times[-1] > t1:
            raise InvalidArgument("dense_times must be sorted and inside t_span")
        out_y = np.empty((dense_times.size, y.size))
        j = 0
        while j < dense_times.size and dense_times[j] == t0:
            out_y[j] = y
            j += 1
    else:
        ts, ys = [t0], [y.copy()]

    scale0 = atol + rtol * np.abs(y)
    if fixed_step is not None:
        h = float(fixed_step)
    elif first_step is not None:
        h = float(first_step)
    else:
        d0 = np.linalg.norm(y / scale0) / np.sqrt(y.size)
        d1 = np.linalg.norm(f / scale0) / np.sqrt(y.size)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h, max_step, t1 - t0)

    t = t0
    err_prev = 1e-4
    n_steps = n_rej = 0
    while t < t1:
        h = min(h, t1 - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError("step size underflow", t)
        K = _stages(rhs, t, y, h, f)
        y_new = y + h * (_B5 @ K)
        if not np.all(np.isfinite(y_new)):
            if fixed_step is not None:
                raise IntegrationError("solution became non-finite", t)
            h *= _MIN_FACTOR
            n_rej += 1
            continue
        if fixed_step is None:
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = np.sqrt(np.mean((h * (_E @ K) / scale) ** 2))
            if err > 1.0:
                h *= max(_MIN_FACTOR, _SAFETY * err ** -(1 / 5))
                n_rej += 1
                continue
        t_new = t + h
        if t1 - t_new < 1e-12 * max(1.0, abs(t1)):
            t_new = t1  # absorb rounding so the last step is not a sliver
        f_new = K[6]  # first-same-as-last: last stage is rhs(t_new, y_new)
        if dense_times is not None:
            while j < dense_times.size and dense_times[j] <= t_new:
                theta = (dense_times[j] - t) / h
                powers = theta ** np.arange(1, 5)
                out_y[j] = y + h * (K.T @ (_DENSE @ powers))
                j += 1
        else:
            ts.append(t_new)
            ys.append(y_new.copy())
        t, y, f = t_new, y_new, f_new
        n_steps += 1
        if fixed_step is None:
            err = max(err, 1e-10)
            factor = _SAFETY * err ** -_ALPHA_I * err_prev ** _BETA_P
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            h = min(h, max_step)
            err_prev = err

    if dense_times is not None:
        # exact end point instead of interpolated value
        out_y[dense_times == t1] = y
        return Trajectory(dense_times, out_y, n_steps, n_rej)
    return Trajectory(np.array(ts), np.array(ys), n_steps, n_rej)


# --------------------------------------------------------------------------- systems


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta_l: float = 8.0 / 3.0


def lorenz_rhs(state, params: LorenzParams = LorenzParams()) -> np.ndarray:
    x, y, z = state
    return np.array([params.sigma * (y - x), x * (params.rho - z) - y, x * y - params.beta_l * z])


@dataclass(frozen=True)
class DoublePendulumParams:
    m1: float = 0.035
    m2: float = 0.010
    l1: float = 0.091
    l2: float = 0.070
    g: float = 9.81

    def __post_init__(self):
        if min(self.m1, self.m2, self.l1, self.l2, self.g) <= 0:
            raise InvalidArgument("double pendulum parameters must be positive")

    def true_coefficients(self) -> dict[str, dict[str, float]]:
        """Explicit-form coefficients of the two acceleration equations."""
        m1, m2, l1, l2, g = self.m1, self.m2, self.l1, self.l2, self.g
        a = m2 * l2 / ((m1 + m2) * l1)
        return {
            "w1": {"dstate(w2)*cos(th1-th2)": -a, "sin(th1-th2)*w2^2": -a, "sin(th1)": -g / l1},
            "w2": {"dstate(w1)*cos(th1-th2)": -l1 / l2, "sin(th1-th2)*w1^2": l1 / l2,
                   "sin(th2)": -g / l2},
        }


def double_pendulum_rhs(state, params: DoublePendulumParams = DoublePendulumParams()) -> np.ndarray:
    th1, th2, w1, w2 = state
    m1, m2, l1, l2, g = params.m1, params.m2, params.l1, params.l2, params.g
    c, s = np.cos(th1 - th2), np.sin(th1 - th2)
    A = np.array([[(m1 + m2) * l1, m2 * l2 * c],
                  [m2 * l1 * c, m2 * l2]])
    b = -np.array([m2 * l2 * w2 ** 2 * s + (m1 + m2) * g * np.sin(th1),
                   -m2 * l1 * w1 ** 2 * s + m2 * g * np.sin(th2)])
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-15:
        raise InvalidArgument(f"singular double pendulum mass matrix at state {state}")
    dw = np.linalg.solve(A, b)
    return np.array([w1, w2, dw[0], dw[1]])


def double_pendulum_energy(state, params: DoublePendulumParams = DoublePendulumParams()) -> float:
    th1, th2, w1, w2 = state
    m1, m2, l1, l2, g = params.m1, params.m2, params.l1, params.l2, params.g
    kinetic = 0.5 * (m1 + m2) * l1 ** 2 * w1 ** 2 + 0.5 * m2 * l2 ** 2 * w2 ** 2 \
        + m2 * l1 * l2 * w1 * w2 * np.cos(th1 - th2)
    potential = -(m1 + m2) * g * l1 * np.cos(th1) - m2 * g * l2 * np.cos(th2)
    return float(kinetic + potential)


class MultiSine:
    """Band-limited multi-sine excitation with seeded random phases."""

    def __init__(self, amplitude: float = 3.0, freqs=(0.1, 0.23, 0.37, 0.61, 0.89),
                 seed: int = 0, t_end: float = np.inf):
        rng = np.random.default_rng(seed)
        self.freqs = np.asarray(freqs, dtype=float)
        self.phases = rng.uniform(0, 2 * np.pi, self.freqs.size)
        self.amplitude = float(amplitude)
        self.t_end = t_end

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_end):
            raise InvalidArgument(f"input signal undefined outside [0, {self.t_end}]")
        w = 2 * np.pi * self.freqs
        vals = np.sin(np.multiply.outer(t, w) + self.phases).sum(axis=-1)
        return self.amplitude * vals / np.sqrt(self.freqs.size / 2)


@dataclass(frozen=True)
class EmpsParams:
    """Reference EMPS model written as p' = (tau - Fv p - Fc sign(p) - c) / M.

    ``sign_convention="table4"`` (default) keeps the viscous and Coulomb signs
    of the printed reference row, under which friction feeds energy in and
    the velocity grows like ``exp(2.14 t)``; ``"eq17"`` makes friction oppose
    motion.
    """

    M_mass: float = 1 / 0.370
    Fv: float = 2.140 / 0.370
    Fc: float = 0.214 / 0.370
    c_off: float = -0.0333 / 0.370
    sign_convention: str = "table4"

    def __post_init__(self):
        if self.M_mass <= 0:
            raise InvalidArgument("EMPS mass must be positive")
        if self.sign_convention not in ("eq17", "table4"):
            raise InvalidArgument(f"unknown EMPS sign convention {self.sign_convention!r}")

    def true_coefficients(self) -> dict[str, float]:
        flip = -1.0 if self.sign_convention == "eq17" else 1.0
        return {"input(tau)": 1 / self.M_mass, "p": flip * self.Fv / self.M_mass,
                "sign(p)": flip * self.Fc / self.M_mass, "1": -self.c_off / self.M_mass}


def emps_rhs(state, t: float, params: EmpsParams, tau: Callable,
             stick_tol: float = 1e-7) -> np.ndarray:
    """EMPS vector field with Coulomb friction resolved as a Filippov sliding mode.

    Inside ``|p| < stick_tol`` the friction force takes whatever value in
    ``[-Fc, Fc]`` cancels the drive, so the carriage sticks instead of chattering
    around ``p = 0`` (which would stall an adaptive integrator).
    """
    q, p = state
    coef = params.true_coefficients()
    drive = coef["input(tau)"] * float(tau(t)) + coef["1"]
    fc = coef["sign(p)"]
    if abs(p) < stick_tol and fc != 0:
        sgn = float(np.clip(drive / -fc, -1.0, 1.0))
    else:
        sgn = np.sign(p)
    return np.array([p, drive + coef["p"] * p + fc * sgn])


def simulate_discovered(model, y0, t_span, dense_times=None, input_fn=None,
                        rtol: float = 1e-9, atol: float = 1e-9) -> Trajectory:
    """Integrate a discovered model; implicit derivative terms are solved per step."""
    rhs = model.vector_field(input_fn)
    return integrate(lambda t, y: rhs(t, y), y0, t_span, rtol=rtol, atol=atol,
                     dense_times=dense_times)
