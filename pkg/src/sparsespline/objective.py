"""Data loss, physics loss and their analytic gradients.

Each dataset (source) carries its own spline control points ``P`` of shape
``(r + 3, n_fit)``. For a first-order system the library sees the spline
values and the physics target is the first derivative. For a second-order
system only the positions are splined; the library sees positions and
velocities (first derivative) and the target is the second derivative.
Collocation rows of all sources are stacked into one regression.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import bspline
from .errors import InvalidArgument
from .library import CandidateLibrary


@dataclass
class Hyperparams:
    alpha: float | None = None  # None: scale-ratio rule from the data
    beta: float | None = None  # None: Pareto-knee scan after pre-training
    eta: float = 1e-6
    colloc_factor: int = 10
    K: int = 8
    M: int = 10
    R: int = 5
    delta_tol: float = 0.02
    lr: float = 1e-2
    lr_decay_at: float = 0.8
    pretrain_epochs: int = 20000
    ado_epochs: int = 1000
    tune_epochs: int = 5000
    seed: int = 0
    segments: int | Sequence[int] | None = None  # spline segment count r per source
    pretrain_ridge: float = 0.0  # ridge on unit-norm-column coefficients during pre-training
    pretrain_segments: int | None = None  # pre-train at this coarser r first, then refine
    optimizer: str = "adam"  # "adam" (epochs) or "lm" (Levenberg-Marquardt iterations)
    lm_max_iter: int = 100

    def __post_init__(self):
        if self.alpha is not None and self.alpha <= 0:
            raise InvalidArgument("alpha must be positive")
        if self.beta is not None and self.beta < 0:
            raise InvalidArgument("beta must be non-negative")
        if self.eta <= 0:
            raise InvalidArgument("eta must be positive")
        for name in ("colloc_factor", "K", "M", "R"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be >= 1")
        if self.pretrain_segments is not None and self.pretrain_segments < 1:
            raise InvalidArgument("pretrain_segments must be >= 1")
        if self.pretrain_ridge < 0:
            raise InvalidArgument("pretrain_ridge must be >= 0")
        if self.optimizer not in ("adam", "lm"):
            raise InvalidArgument(f"optimizer must be 'adam' or 'lm', got {self.optimizer!r}")
        for name in ("pretrain_epochs", "ado_epochs", "tune_epochs", "lm_max_iter"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    data: float
    physics: float
    l0_count: int
    total: float

    @classmethod
    def compose(cls, data: float, physics: float, l0_count: int, alpha: float, beta: float):
        return cls(data, physics, int(l0_count), data + alpha * physics + beta * l0_count)


def data_loss(P: Sequence[np.ndarray], Nm: Sequence, Ym: Sequence[np.ndarray]) -> float:
    """Sum over sources and channels of the mean squared spline-vs-measurement error."""
    if not (len(P) == len(Nm) == len(Ym)) or not P:
        raise InvalidArgument("need matching, non-empty lists of P, Nm, Ym")
    total = 0.0
    for p, n, y in zip(P, Nm, Ym):
        r = bspline.eval_state(n, p) - np.asarray(y).reshape(n.shape[0], -1)
        total += float(np.sum(r * r)) / n.shape[0]
    return total


def spline_channels(p: np.ndarray, bases: Sequence, order: int):
    """Return (states, state_derivs, targets) at collocation rows for one source."""
    N0, N1, N2 = bases
    Y0 = bspline.eval_state(N0, p)
    Y1 = bspline.eval_state(N1, p)
    if order == 1:
        return Y0, Y1, Y1
    Y2 = bspline.eval_state(N2, p)
    return np.hstack([Y0, Y1]), np.hstack([Y1, Y2]), Y2


def equation_channels(order: int, n_fit: int) -> list[int]:
    """Library state channel whose derivative each equation defines."""
    return list(range(n_fit)) if order == 1 else list(range(n_fit, 2 * n_fit))


def allowed_terms(library: CandidateLibrary, order: int, n_fit: int) -> np.ndarray:
    """Boolean (l, n_eq) mask; a term may not contain its own equation's derivative."""
    chans = equation_channels(order, n_fit)
    return np.array([[c not in term.deriv_channels for c in chans] for term in library.terms],
                    dtype=bool).reshape(library.l, len(chans))


def _stack(P, bases_list, library, order, inputs_list):
    Phis, Ts, parts = [], [], []
    for i, (p, bases) in enumerate(zip(P, bases_list)):
        S, D, T = spline_channels(p, bases, order)
        U = None if inputs_list is None else inputs_list[i]
        Phis.append(library.evaluate(S, D if library.uses_derivatives else None, U))
        Ts.append(T)
        parts.append((S, D, U))
    return np.vstack(Phis), np.vstack(Ts), parts


def physics_loss(P: Sequence[np.ndarray], Lam: np.ndarray, library: CandidateLibrary,
                 bases_list: Sequence, order: int = 1, inputs_list=None) -> float:
    """Mean (over stacked collocation rows) of ||Phi lam_i - target_i||^2, summed over i."""
    Phi, T, _ = _stack(P, bases_list, library, order, inputs_list)
    Lam = np.asarray(Lam, dtype=float).reshape(library.l, -1)
    if Lam.shape[1] != T.shape[1]:
        raise InvalidArgument(f"coefficient matrix has {Lam.shape[1]} columns, "
                              f"expected {T.shape[1]} equations")
    R = Phi @ Lam - T
    return float(np.sum(R * R)) / Phi.shape[0]


@dataclass
class Source:
    """Per-dataset spline problem: measurement and collocation bases."""

    kv: bspline.KnotVector
    t0: float
    Nm: sp.csr_matrix
    Ym: np.ndarray
    tc: np.ndarray
    Nc: tuple
    Uc: np.ndarray | None = None
    tm: np.ndarray = field(default=None)

    @classmethod
    def build(cls, times, Y, r: int, colloc_times, inputs_c=None) -> "Source":
        times = np.asarray(times, dtype=float)
        t0 = float(times[0])
        kv = bspline.build_knots(times[-1] - t0, r)
        tc = np.asarray(colloc_times, dtype=float) - t0
        Nc = tuple(bspline.sparse_basis(tc, kv, k) for k in range(3))
        Y = np.asarray(Y, dtype=float)
        return cls(kv=kv, t0=t0, Nm=bspline.sparse_basis(times - t0, kv, 0),
                   Ym=Y.reshape(times.size, -1), tc=tc, Nc=Nc, Uc=inputs_c, tm=times - t0)


class SplineProblem:
    """Losses and gradients for a fixed library, system order and set of sources."""

    def __init__(self, sources: Sequence[Source], library: CandidateLibrary, order: int = 1):
        if not sources:
            raise InvalidArgument("need at least one source")
        if order not in (1, 2):
            raise InvalidArgument("order must be 1 or 2")
        self.sources = list(sources)
        self.library = library
        self.order = order
        self.n_fit = self.sources[0].Ym.shape[1]
        if library.n_states != self.n_fit * order:
            raise InvalidArgument(
                f"library has {library.n_states} states but an order-{order} system with "
                f"{self.n_fit} measured channels needs {self.n_fit * order}")
        if library.uses_inputs and any(s.Uc is None for s in self.sources):
            raise InvalidArgument("library references inputs but a source has none")
        self.n_eq = self.n_fit
        self.allowed = allowed_terms(library, order, self.n_fit)
        self.n_colloc = sum(s.tc.size for s in self.sources)

    @property
    def bases(self):
        return [s.Nc for s in self.sources]

    @property
    def inputs(self):
        return [s.Uc for s in self.sources] if self.library.uses_inputs else None

    def library_matrix(self, P) -> tuple[np.ndarray, np.ndarray]:
        Phi, T, _ = _stack(P, self.bases, self.library, self.order, self.inputs)
        return Phi, T

    def data_loss(self, P) -> float:
        return data_loss(P, [s.Nm for s in self.sources], [s.Ym for s in self.sources])

    def physics_loss(self, P, Lam) -> float:
        return physics_loss(P, Lam, self.library, self.bases, self.order, self.inputs)

    def total_loss(self, P, Lam, alpha: float, beta: float) -> LossBreakdown:
        Lam = np.asarray(Lam)
        return LossBreakdown.compose(self.data_loss(P), self.physics_loss(P, Lam),
                                     np.count_nonzero(Lam), alpha, beta)

    def gradients(self, P, Lam, alpha: float, mask=None):
        """Return (loss_data, loss_physics, [dL/dP per source], dL/dLam).

        L = data + alpha * physics; the l0 term is constant on a fixed support.
        Entries of dL/dLam outside ``mask`` (and outside the allowed set) are 0.
        """
        lib = self.library
        Lam = np.asarray(Lam, dtype=float)
        mask = self.allowed if mask is None else (np.asarray(mask, dtype=bool) & self.allowed)
        Nc_tot = self.n_colloc
        nf = self.n_fit

        gP = []
        ld = 0.0
        for p, s in zip(P, self.sources):
            r = s.Nm @ p - s.Ym
            ld += float(np.sum(r * r)) / s.Ym.shape[0]
            gP.append((2.0 / s.Ym.shape[0]) * (s.Nm.T @ r))

        lp = 0.0
        gLam = np.zeros_like(Lam)
        for k, (p, s) in enumerate(zip(P, self.sources)):
            S, D, T = spline_channels(p, s.Nc, self.order)
            Dlib = D if lib.uses_derivatives else None
            U = s.Uc if lib.uses_inputs else None
            Phi = lib.evaluate(S, Dlib, U)
            R = Phi @ Lam - T
            lp += float(np.sum(R * R))
            gLam += (2.0 / Nc_tot) * (Phi.T @ R)
            G = (2.0 / Nc_tot) * (R @ Lam.T)  # dLp / dPhi
            dS, dD = lib.partials(S, Dlib, U)
            gS = np.einsum("tj,tjk->tk", G, dS)
            gD = np.einsum("tj,tjk->tk", G, dD)
            N0, N1, N2 = s.Nc
            dR = -(2.0 / Nc_tot) * R
            if self.order == 1:
                g = N0.T @ gS + N1.T @ (gD + dR)
            else:
                g = (N0.T @ gS[:, :nf] + N1.T @ gS[:, nf:] + N1.T @ gD[:, :nf]
                     + N2.T @ (gD[:, nf:] + dR))
            gP[k] = gP[k] + alpha * g
        lp /= Nc_tot
        return ld, lp, gP, alpha * np.where(mask, gLam, 0.0)


def default_alpha(Ym, dt_est, order: int = 1) -> float:
    """Physics weight from the state-to-derivative scale ratio, clamped to [1e-6, 1e6].

    ``dt_est`` is a sample spacing or the array of sample times. For
    second-order systems the ratio uses the second derivative, since that is
    the physics residual's unit.
    """
    Y = np.asarray(Ym, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] < 3:
        raise InvalidArgument("need at least 3 samples to estimate alpha")
    dt = np.diff(np.asarray(dt_est, dtype=float)) if np.ndim(dt_est) else float(dt_est)
    dY = Y
    for _ in range(order):
        dY = np.diff(dY, axis=0) / (dt[:, None] if np.ndim(dt) else dt)
        if np.ndim(dt):
            dt = 0.5 * (dt[1:] + dt[:-1])
    sy = float(np.mean(np.std(Y, axis=0)))
    sd = float(np.mean(np.std(dY, axis=0)))
    if sd == 0.0:
        return 1e6
    return float(np.clip((sy / sd) ** 2, 1e-6, 1e6))


def _spline_jacobian(G_S, G_D, bases, order: int, n_fit: int, i: int, c: int):
    """d(physics residual of equation i) / d(control points of channel c), unscaled."""
    N0, N1, N2 = bases
    if order == 1:
        J = sp.diags(G_S[:, i, c]) @ N0 + sp.diags(G_D[:, i, c]) @ N1
        if i == c:
            J = J - N1
        return J
    J = (sp.diags(G_S[:, i, c]) @ N0 + sp.diags(G_S[:, i, n_fit + c] + G_D[:, i, c]) @ N1
         + sp.diags(G_D[:, i, n_fit + c]) @ N2)
    if i == c:
        J = J - N2
    return J


def residual_jacobian(problem: SplineProblem, P, Lam, alpha: float, mask=None):
    """Stacked residual r with ||r||^2 = data + alpha * physics, and its sparse Jacobian.

    Variables are ordered as each source's control points (channel-major),
    followed by the coefficient entries selected by ``mask`` in row-major order.
    """
    lib = problem.library
    Lam = np.asarray(Lam, dtype=float)
    mask = problem.allowed if mask is None else (np.asarray(mask, dtype=bool) & problem.allowed)
    lam_idx = np.flatnonzero(mask.ravel())
    nf = problem.n_fit
    w_p = np.sqrt(alpha / problem.n_colloc)
    sizes = [p.size for p in P]
    n_vars = sum(sizes) + lam_idx.size
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    rows_r, blocks = [], []
    for k, (p, s) in enumerate(zip(P, problem.sources)):
        m = p.shape[0]
        w_d = 1.0 / np.sqrt(s.Ym.shape[0])
        rows_r.append((w_d * (s.Nm @ p - s.Ym)).ravel(order="F"))
        for c in range(nf):
            col0 = offsets[k] + c * m
            blocks.append(((w_d * s.Nm).tocoo(), col0))
    n_data = sum(len(r) for r in rows_r)

    phys_r, phys_blocks = [], []
    for k, (p, s) in enumerate(zip(P, problem.sources)):
        m = p.shape[0]
        S, D, T = spline_channels(p, s.Nc, problem.order)
        Dlib = D if lib.uses_derivatives else None
        U = s.Uc if lib.uses_inputs else None
        Phi = lib.evaluate(S, Dlib, U)
        R = Phi @ Lam - T
        phys_r.append(w_p * R)
        dS, dD = lib.partials(S, Dlib, U)
        G_S = np.einsum("tjc,ji->tic", dS, Lam)
        G_D = np.einsum("tjc,ji->tic", dD, Lam)
        per_eq = []
        for i in range(problem.n_eq):
            cols = []
            for c in range(nf):
                cols.append((w_p * _spline_jacobian(G_S, G_D, s.Nc, problem.order, nf, i, c)).tocoo())
            per_eq.append(cols)
        phys_blocks.append((per_eq, Phi, m, offsets[k]))

    # assemble: physics rows are ordered equation-major, then source, then time
    r_parts = rows_r[:]
    coo_r, coo_c, coo_v = [], [], []
    row0 = 0
    for blk, col0 in blocks:
        coo_r.append(blk.row + row0)
        coo_c.append(blk.col + col0)
        coo_v.append(blk.data)
        row0 += blk.shape[0]
    lam_pos = {int(f): n_vars - lam_idx.size + q for q, f in enumerate(lam_idx)}
    l = lib.l
    for i in range(problem.n_eq):
        for k, (per_eq, Phi, m, off) in enumerate(phys_blocks):
            r_parts.append(phys_r[k][:, i])
            n_t = Phi.shape[0]
            for c, blk in enumerate(per_eq[i]):
                coo_r.append(blk.row + row0)
                coo_c.append(blk.col + off + c * m)
                coo_v.append(blk.data)
            for j in range(l):
                q = lam_pos.get(j * problem.n_eq + i)
                if q is not None:
                    coo_r.append(np.arange(n_t) + row0)
                    coo_c.append(np.full(n_t, q))
                    coo_v.append(w_p * Phi[:, j])
            row0 += n_t
    r = np.concatenate(r_parts)
    J = sp.csr_matrix((np.concatenate(coo_v), (np.concatenate(coo_r), np.concatenate(coo_c))),
                      shape=(r.size, n_vars))
    return r, J, lam_idx
