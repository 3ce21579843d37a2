"""Uniform cubic B-splines on [0, T].

The knot vector has ``r + 7`` entries with three exterior knots on each side,
all at the same spacing ``h = T / r``. That gives ``r + 3`` cubic basis
functions whose values and first two time derivatives are evaluated with the
Cox-de Boor recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument, OutOfDomain

DEGREE = 3
# relative slack for times that land a rounding error outside [0, T]
_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class KnotVector:
    knots: np.ndarray
    T: float
    r: int

    @property
    def domain_start(self) -> float:
        return 0.0

    @property
    def domain_end(self) -> float:
        return self.T

    @property
    def h(self) -> float:
        return self.T / self.r

    @property
    def n_basis(self) -> int:
        return self.r + DEGREE


def build_knots(T: float, r: int) -> KnotVector:
    if not (np.isfinite(T) and T > 0):
        raise InvalidArgument(f"T must be positive, got {T}")
    if int(r) != r or r < 4:
        raise InvalidArgument(f"r must be an integer >= 4, got {r}")
    r = int(r)
    h = T / r
    knots = np.arange(-DEGREE, r + DEGREE + 1, dtype=float) * h
    knots[DEGREE] = 0.0
    knots[r + DEGREE] = float(T)
    knots.setflags(write=False)
    return KnotVector(knots=knots, T=float(T), r=r)


def default_segments(n_samples: int) -> int:
    return int(min(max(math.ceil(n_samples / 4), 8), 2 * n_samples))


def _check_times(times: np.ndarray, kv: KnotVector) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    slack = _DOMAIN_SLACK * max(kv.T, 1.0)
    bad = np.flatnonzero(~((times >= -slack) & (times <= kv.T + slack)))
    if bad.size:
        i = int(bad[0])
        raise OutOfDomain(f"time index {i} (t={times[i]!r}) outside [0, {kv.T}]")
    return np.clip(times, 0.0, kv.T)


def _cox_de_boor_tables(times: np.ndarray, kv: KnotVector) -> list[np.ndarray]:
    """Tables of N_{s,k}(t) for k = 0..3, each of shape (len(times), r+7-k-1)."""
    tau = kv.knots
    n_seg = len(tau) - 1
    seg = np.searchsorted(tau, times, side="right") - 1
    # t = T closes the last interior segment instead of opening a new one
    seg = np.minimum(seg, kv.r + DEGREE - 1)
    N = np.zeros((times.size, n_seg))
    N[np.arange(times.size), seg] = 1.0
    tables = [N]
    t = times[:, None]
    for k in range(1, DEGREE + 1):
        prev = tables[-1]
        m = prev.shape[1] - 1
        left_den = tau[k:k + m] - tau[:m]
        right_den = tau[k + 1:k + 1 + m] - tau[1:1 + m]
        left = (t - tau[:m]) / left_den * prev[:, :m]
        right = (tau[k + 1:k + 1 + m] - t) / right_den * prev[:, 1:m + 1]
        tables.append(left + right)
    return tables


def _differentiate(tables: list[np.ndarray], tau: np.ndarray, k: int, order: int) -> np.ndarray:
    # d/dt N_{s,k} = k/(tau_{s+k}-tau_s) N_{s,k-1} - k/(tau_{s+k+1}-tau_{s+1}) N_{s+1,k-1}
    if order == 0:
        return tables[k]
    lower = _differentiate(tables, tau, k - 1, order - 1)
    m = tables[k].shape[1]
    a = k / (tau[k:k + m] - tau[:m])
    b = k / (tau[k + 1:k + 1 + m] - tau[1:1 + m])
    return a * lower[:, :m] - b * lower[:, 1:m + 1]


def basis_matrix(times, kv: KnotVector, deriv_order: int = 0) -> np.ndarray:
    """Dense (len(times), r+3) matrix of cubic basis values or derivatives."""
    if deriv_order not in (0, 1, 2):
        raise InvalidArgument(f"deriv_order must be 0, 1 or 2, got {deriv_order}")
    times = _check_times(np.atleast_1d(times), kv)
    tables = _cox_de_boor_tables(times, kv)
    return _differentiate(tables, kv.knots, DEGREE, deriv_order)


def basis_values(t: float, kv: KnotVector, deriv_order: int = 0) -> np.ndarray:
    return basis_matrix(np.array([t], dtype=float), kv, deriv_order)[0]


def sparse_basis(times, kv: KnotVector, deriv_order: int = 0) -> sp.csr_matrix:
    B = basis_matrix(times, kv, deriv_order)
    B[np.abs(B) < 1e-300] = 0.0
    return sp.csr_matrix(B)


def eval_state(N, P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if N.shape[1] != P.shape[0]:
        raise InvalidArgument(
            f"basis has {N.shape[1]} columns but control points have {P.shape[0]} rows")
    return np.asarray(N @ P)


def fit_control_points(N, Y: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Data-only penalized least squares: argmin ||N P - Y||^2 + ridge ||P||^2."""
    N = N.toarray() if sp.issparse(N) else np.asarray(N, dtype=float)
    Y = np.asarray(Y, dtype=float)
    A = N.T @ N + ridge * np.eye(N.shape[1])
    return np.linalg.solve(A, N.T @ Y)


class SplineCurve:
    """A fixed spline with known control points, e.g. an exogenous input signal."""

    def __init__(self, kv: KnotVector, P: np.ndarray, t0: float = 0.0):
        self.kv = kv
        self.P = np.asarray(P, dtype=float)
        self.t0 = float(t0)

    @classmethod
    def fit(cls, times, values, r: int | None = None, ridge: float = 1e-8) -> "SplineCurve":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        t0 = times[0]
        kv = build_knots(times[-1] - t0, r or default_segments(times.size))
        P = fit_control_points(basis_matrix(times - t0, kv), values, ridge)
        return cls(kv, P, t0)

    def __call__(self, times, deriv_order: int = 0) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return eval_state(basis_matrix(np.atleast_1d(times) - self.t0, self.kv, deriv_order), self.P)
