"""Sequential threshold ridge regression with an adaptive tolerance schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidArgument

GOLDEN = 1.618


@dataclass(frozen=True)
class SparseSolution:
    coefficients: np.ndarray
    support: np.ndarray
    loss: float
    history: tuple[float, ...] = ()  # accepted loss after each outer round

    @property
    def size(self) -> int:
        return int(self.support.sum())


def ridge(Phi: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    """Solve (Phi^T Phi + eta I) lam = Phi^T y with a Cholesky factorization."""
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    if eta <= 0:
        raise InvalidArgument(f"eta must be positive, got {eta}")
    if not (np.all(np.isfinite(Phi)) and np.all(np.isfinite(y))):
        raise InvalidArgument("ridge inputs must be finite")
    G = Phi.T @ Phi
    G[np.diag_indices_from(G)] += eta
    return sla.cho_solve(sla.cho_factor(G, lower=True), Phi.T @ y)


def normalize_columns(Phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale columns to unit Euclidean norm.

    All-zero columns keep a scale of 0 and stay zero; callers must drop them
    from the regression.
    """
    Phi = np.asarray(Phi, dtype=float)
    scales = np.linalg.norm(Phi, axis=0)
    safe = np.where(scales > 0, scales, 1.0)
    return Phi / safe, scales


def _lstsq(Phi: np.ndarray, y: np.ndarray) -> np.ndarray:
    # QR-based (LAPACK gelsy) least squares; Phi is usually tall, not square
    return sla.lstsq(Phi, y, lapack_driver="gelsy")[0]


def _objective(Phi, lam, y, beta, scale) -> float:
    r = Phi @ lam - y
    return float(scale * (r @ r) + beta * np.count_nonzero(lam))


def stridge(Phi: np.ndarray, y: np.ndarray, delta_tol: float, M: int, R: int,
            beta: float, eta: float = 1e-6, loss_scale: float = 1.0,
            refit: bool = True) -> SparseSolution:
    """Sparse regression of ``y`` on the columns of ``Phi``.

    Hard thresholds are applied to coefficients of the column-normalized
    system. Each of the ``M`` outer rounds runs ``R`` ridge/prune sweeps at
    the current tolerance; a round's solution is kept only if it lowers
    ``loss_scale * ||Phi lam - y||^2 + beta * ||lam||_0``, otherwise the
    tolerance increment shrinks by the golden ratio. The tolerance grows by
    the (possibly shrunk) increment after every round.

    With ``refit`` the returned coefficients are re-estimated by ordinary
    least squares on the selected support, which removes the ridge bias
    without changing the support.
    """
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if Phi.ndim != 2 or Phi.shape[0] != y.size:
        raise InvalidArgument(f"Phi shape {Phi.shape} incompatible with y of length {y.size}")
    if delta_tol <= 0 or M < 1 or R < 1 or beta < 0 or eta <= 0:
        raise InvalidArgument("need delta_tol > 0, M >= 1, R >= 1, beta >= 0, eta > 0")
    if not (np.all(np.isfinite(Phi)) and np.all(np.isfinite(y))):
        raise InvalidArgument("stridge inputs must be finite")

    l = Phi.shape[1]
    Phi_n, scales = normalize_columns(Phi)
    usable = scales > 0

    # baseline: plain least squares on every usable column
    best = np.zeros(l)
    best[usable] = _lstsq(Phi_n[:, usable], y)
    best_loss = _objective(Phi_n, best, y, beta, loss_scale)
    history = []

    tol = delta_tol
    dtol = delta_tol
    for _ in range(M):
        active = usable.copy()
        lam = np.zeros(l)
        for _ in range(R):
            if not active.any():
                break
            lam = np.zeros(l)
            lam[active] = ridge(Phi_n[:, active], y, eta)
            keep = np.abs(lam) >= tol
            lam[~keep] = 0.0
            active &= keep
        loss = _objective(Phi_n, lam, y, beta, loss_scale)
        if loss < best_loss:
            best_loss = loss
            best = lam
        else:
            dtol = dtol / GOLDEN
        history.append(best_loss)
        tol = tol + dtol

    support = best != 0
    if refit and support.any():
        refitted = np.zeros(l)
        refitted[support] = _lstsq(Phi_n[:, support], y)
        refit_loss = _objective(Phi_n, refitted, y, beta, loss_scale)
        # a degenerate refit can zero a coefficient; keep ridge values then
        if refit_loss <= best_loss and np.count_nonzero(refitted) == support.sum():
            best, best_loss = refitted, refit_loss

    coef = np.zeros(l)
    coef[usable] = best[usable] / scales[usable]
    return SparseSolution(coefficients=coef, support=coef != 0, loss=best_loss,
                          history=tuple(history))
