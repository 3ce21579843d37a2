"""Three-stage training: pre-training, hybrid alternating-direction
optimization (sparse regression alternating with gradient refinement), and
post-tuning on the frozen support."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import bspline
from .data import Dataset, sample_collocation
from .errors import InvalidArgument, TrainingError
from .library import CandidateLibrary
from .objective import (Hyperparams, LossBreakdown, Source, SplineProblem, default_alpha,
                        residual_jacobian)
from .stridge import stridge

log = logging.getLogger(__name__)

BETA_GRID = tuple(10.0 ** e for e in np.arange(-6.0, -0.99, 0.5))


@dataclass
class CoefficientMatrix:
    values: np.ndarray  # (l, n_eq)
    support: np.ndarray  # bool, same shape

    def __post_init__(self):
        self.values = np.where(self.support, self.values, 0.0)

    @classmethod
    def dense(cls, values, allowed):
        return cls(np.asarray(values, dtype=float), np.asarray(allowed, dtype=bool).copy())

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    def copy(self) -> "CoefficientMatrix":
        return CoefficientMatrix(self.values.copy(), self.support.copy())


@dataclass
class TrainState:
    P: list[np.ndarray]
    Lam: CoefficientMatrix
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0
    best_loss: float = np.inf
    seed: int = 0
    # natural magnitude of each parameter entry; Adam steps are taken in these units
    scales: list[np.ndarray] | None = None

    def __post_init__(self):
        if not self.m:
            self.reset_moments()
        if self.scales is None:
            self.scales = [np.ones_like(p) for p in self.params]

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.P, self.Lam.values]

    def reset_moments(self):
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.step = 0

    def copy(self) -> "TrainState":
        return TrainState([p.copy() for p in self.P], self.Lam.copy(),
                          [a.copy() for a in self.m], [a.copy() for a in self.v],
                          self.step, self.best_loss, self.seed, self.scales)


def adam_step(state: TrainState, grads, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> TrainState:
    """One bias-corrected Adam update of control points and unmasked coefficients (in place)."""
    grads = list(grads)
    params = state.params
    if len(grads) != len(params):
        raise InvalidArgument(f"expected {len(params)} gradient blocks, got {len(grads)}")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise InvalidArgument(f"gradient block {i} has shape {g.shape}, expected {params[i].shape}")
        if not np.all(np.isfinite(g)):
            name = "coefficients" if i == len(params) - 1 else f"control points of source {i}"
            raise TrainingError(f"non-finite gradient for {name}; try a smaller learning rate")
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * g * g
        update = lr * state.scales[i] * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + eps)
        if i == len(params) - 1:
            update = np.where(state.Lam.support, update, 0.0)
        p -= update
    return state


# --------------------------------------------------------------------------- setup


def infer_order(dataset: Dataset, library: CandidateLibrary) -> int:
    n_fit = len(dataset.state_names)
    if library.n_states == n_fit:
        order = 1
    elif library.n_states == 2 * n_fit:
        order = 2
    else:
        raise InvalidArgument(f"library has {library.n_states} states; dataset measures "
                              f"{n_fit} channels (need equal, or double for second order)")
    if tuple(library.state_names[:n_fit]) != tuple(dataset.state_names):
        raise InvalidArgument(f"library states {library.state_names} do not start with the "
                              f"measured channels {dataset.state_names}")
    return order


def build_problem(dataset: Dataset, library: CandidateLibrary, hp: Hyperparams,
                  order: int | None = None) -> SplineProblem:
    order = order or infer_order(dataset, library)
    segs = hp.segments
    sources = []
    for k, src in enumerate(dataset.sources):
        n_m = src.times.size
        if isinstance(segs, (list, tuple)):
            r = int(segs[k])
        else:
            r = int(segs) if segs else bspline.default_segments(n_m)
        tc = sample_collocation(src.duration, hp.colloc_factor * n_m, hp.seed + 7919 * (k + 1),
                                t0=float(src.times[0]))
        Uc = None
        if library.uses_inputs:
            if src.inputs is None:
                raise InvalidArgument("library needs inputs but the dataset has none")
            # exogenous input: fixed spline through its samples, evaluated at collocation
            Uc = bspline.SplineCurve.fit(src.times, src.inputs, r=max(4, n_m - 1))(tc)
        sources.append(Source.build(src.times, src.states, r, tc, Uc))
    return SplineProblem(sources, library, order)


def resolve_alpha(dataset: Dataset, hp: Hyperparams, order: int) -> float:
    if hp.alpha is not None:
        return float(hp.alpha)
    # per-source ratios averaged: sources need not share a time grid
    alphas = [default_alpha(s.states, s.times, order) for s in dataset.sources]
    return float(np.mean(alphas))


# --------------------------------------------------------------------------- stages


def _lr_at(hp: Hyperparams, epoch: int, n_epochs: int) -> float:
    return hp.lr * (0.1 if epoch >= hp.lr_decay_at * n_epochs else 1.0)


def _descend(state: TrainState, problem: SplineProblem, hp: Hyperparams, alpha: float,
             n_epochs: int, stage: str, ridge_w: np.ndarray | None = None) -> TrainState:
    state.reset_moments()
    mask = state.Lam.support
    for epoch in range(n_epochs):
        ld, lp, gP, gL = problem.gradients(state.P, state.Lam.values, alpha, mask)
        if not np.isfinite(ld + lp):
            raise TrainingError("loss became non-finite; try a smaller learning rate", stage)
        if ridge_w is not None:
            gL = gL + 2.0 * ridge_w ** 2 * state.Lam.values * mask
        adam_step(state, [*gP, gL], _lr_at(hp, epoch, n_epochs))
    return state


def _lm_descend(state: TrainState, problem: SplineProblem, hp: Hyperparams, alpha: float,
                stage: str, ridge_w: np.ndarray | None = None) -> TrainState:
    """Levenberg-Marquardt on data + alpha * physics over splines and unmasked coefficients.

    ``ridge_w`` adds the residuals ``ridge_w * Lam`` on the unmasked entries.
    """
    mask = state.Lam.support & problem.allowed
    P = [p.copy() for p in state.P]
    Lam = state.Lam.values.copy()

    def unpack(x, lam_idx):
        out, o = [], 0
        for p in P:
            out.append(x[o:o + p.size].reshape(p.shape, order="F"))
            o += p.size
        L = Lam.ravel().copy()
        L[lam_idx] = x[o:]
        return out, L.reshape(Lam.shape)

    def residuals(P_, Lam_):
        r_, J_, idx = residual_jacobian(problem, P_, Lam_, alpha, mask)
        if ridge_w is None:
            return r_, J_, idx
        w = ridge_w.ravel()[idx]
        extra = sp.csr_matrix((w, (np.arange(idx.size), J_.shape[1] - idx.size + np.arange(idx.size))),
                              shape=(idx.size, J_.shape[1]))
        return np.concatenate([r_, w * Lam_.ravel()[idx]]), sp.vstack([J_, extra]).tocsr(), idx

    r, J, lam_idx = residuals(P, Lam)
    f = float(r @ r)
    x = np.concatenate([p.ravel(order="F") for p in P] + [Lam.ravel()[lam_idx]])
    mu = 1e-4
    for _ in range(hp.lm_max_iter):
        A = (J.T @ J).tocsc()
        g = J.T @ r
        d = A.diagonal()
        d = np.maximum(d, 1e-12 * max(d.max(), 1e-300))
        improved = False
        while mu < 1e12:
            try:
                step = splu((A + mu * sp.diags(d)).tocsc()).solve(-g)
            except RuntimeError:
                mu *= 10
                continue
            Pn, Ln = unpack(x + step, lam_idx)
            rn, Jn, _ = residuals(Pn, Ln)
            fn = float(rn @ rn)
            if np.isfinite(fn) and fn < f:
                improved = True
                break
            mu *= 4
        if not improved:
            break
        rel = (f - fn) / f if f > 0 else 0.0
        x, r, J, f = x + step, rn, Jn, fn
        P, Lam = Pn, Ln
        mu = max(mu / 3, 1e-12)
        if rel < 1e-12:
            break
    if not np.isfinite(f):
        raise TrainingError("loss became non-finite", stage)
    state.P = P
    state.Lam = CoefficientMatrix(Lam, state.Lam.support)
    return state


def _refine(state: TrainState, problem: SplineProblem, hp: Hyperparams, alpha: float,
            n_epochs: int, stage: str, ridge_w: np.ndarray | None = None) -> TrainState:
    if hp.optimizer == "lm":
        return _lm_descend(state, problem, hp, alpha, stage, ridge_w)
    return _descend(state, problem, hp, alpha, n_epochs, stage, ridge_w)


def _ridge_weights(problem: SplineProblem, P, alpha: float, eta: float) -> np.ndarray | None:
    """Weights turning eta * ||unit-norm-column coefficients||^2 into physics-loss units."""
    if eta <= 0:
        return None
    Phi, _ = problem.library_matrix(P)
    norms = np.linalg.norm(Phi, axis=0)
    w = np.sqrt(alpha * eta / problem.n_colloc) * norms
    return np.repeat(w[:, None], problem.n_eq, axis=1)


def loss_of(state: TrainState, problem: SplineProblem, alpha: float, beta: float) -> LossBreakdown:
    return problem.total_loss(state.P, state.Lam.values, alpha, beta)


def initial_state(problem: SplineProblem, hp: Hyperparams) -> TrainState:
    """Data-only spline fit, least-squares dense coefficients, and step scales."""
    P = [_data_fit(s) for s in problem.sources]
    Phi, T = problem.library_matrix(P)
    values = np.zeros((problem.library.l, problem.n_eq))
    for i in range(problem.n_eq):
        cols = problem.allowed[:, i]
        values[cols, i] = np.linalg.lstsq(Phi[:, cols], T[:, i], rcond=None)[0]
    Lam = CoefficientMatrix.dense(values, problem.allowed)
    p_scales = [np.broadcast_to(_nonzero_std(s.Ym), p.shape).copy()
                for s, p in zip(problem.sources, P)]
    col_rms = np.sqrt(np.mean(Phi ** 2, axis=0))
    lam_scale = _nonzero_std(T)[None, :] / np.where(col_rms > 0, col_rms, 1.0)[:, None]
    return TrainState(P, Lam, seed=hp.seed, scales=[*p_scales, lam_scale])


def _data_fit(src: Source) -> np.ndarray:
    """Data-only control points.

    When the spline has more control points than there are samples, a plain
    fit oscillates between samples; fit a coarser spline instead and project
    it onto the fine basis at measurement and collocation times.
    """
    n_m = src.Ym.shape[0]
    if src.kv.n_basis <= n_m:
        return bspline.fit_control_points(src.Nm, src.Ym, ridge=1e-8)
    coarse = bspline.SplineCurve.fit(src.tm, src.Ym, r=max(4, n_m - 3), ridge=1e-6)
    t = np.union1d(src.tm, src.tc)
    return bspline.fit_control_points(bspline.sparse_basis(t, src.kv, 0), coarse(t), ridge=1e-8)


def _nonzero_std(Y: np.ndarray) -> np.ndarray:
    sd = np.std(Y, axis=0)
    return np.where(sd > 0, sd, 1.0)


def with_segments(problem: SplineProblem, r: int) -> SplineProblem:
    """Same data, collocation times and inputs on an r-segment spline."""
    sources = [Source.build(s.tm + s.t0, s.Ym, r, s.tc + s.t0, s.Uc) for s in problem.sources]
    return SplineProblem(sources, problem.library, problem.order)


def project_splines(src: SplineProblem, dst: SplineProblem, P) -> list[np.ndarray]:
    """Least-squares transfer of control points onto another knot vector."""
    out = []
    for a, b, p in zip(src.sources, dst.sources, P):
        t = np.union1d(b.tm, b.tc)
        y = bspline.eval_state(bspline.sparse_basis(t, a.kv, 0), p)
        out.append(bspline.fit_control_points(bspline.sparse_basis(t, b.kv, 0), y, ridge=1e-8))
    return out


def pretrain(problem: SplineProblem, hp: Hyperparams, alpha: float) -> TrainState:
    """Fit splines and a dense coefficient matrix on data + alpha * physics.

    With ``hp.pretrain_segments`` set, the fit is first done on that coarser
    spline and then carried over to the full resolution. A fine spline with
    more control points than samples otherwise lets the dense model chase
    wiggles between measurements.
    """
    for s in problem.sources:
        if s.Ym.shape[0] < 4:
            raise InvalidArgument("pre-training needs at least 4 samples per source")
    state = initial_state(problem, hp)
    if hp.pretrain_segments:
        coarse = with_segments(problem, hp.pretrain_segments)
        rough = pretrain(coarse, replace(hp, pretrain_segments=None), alpha)
        state = TrainState(project_splines(coarse, problem, rough.P), rough.Lam.copy(),
                           seed=hp.seed, scales=state.scales)
    ridge_w = _ridge_weights(problem, state.P, alpha, hp.pretrain_ridge)
    state = _refine(state, problem, hp, alpha, hp.pretrain_epochs, "pretrain", ridge_w)
    loss = loss_of(state, problem, alpha, 0.0)
    if not np.isfinite(loss.total):
        raise TrainingError("pre-training diverged; try a smaller learning rate", "pretrain")
    return state


def regress_equations(Phi: np.ndarray, T: np.ndarray, allowed: np.ndarray, hp: Hyperparams,
                      beta: float, loss_scale: float) -> CoefficientMatrix:
    """One sparse regression per target column over its allowed library columns.

    Thresholds are relative: ``delta_tol`` is a fraction of the target norm,
    applied to coefficients of unit-norm columns.
    """
    values = np.zeros((Phi.shape[1], T.shape[1]))
    for i in range(T.shape[1]):
        cols = allowed[:, i]
        y = T[:, i]
        ynorm = float(np.linalg.norm(y)) or 1.0
        sol = stridge(Phi[:, cols], y, hp.delta_tol * ynorm, hp.M, hp.R, beta, hp.eta,
                      loss_scale=loss_scale)
        values[cols, i] = sol.coefficients
    return CoefficientMatrix(values, values != 0)


def sparse_regression(problem: SplineProblem, P, hp: Hyperparams, alpha: float,
                      beta: float) -> CoefficientMatrix:
    """Per-equation sparse regression on the library built from the splines ``P``."""
    Phi, T = problem.library_matrix(P)
    return regress_equations(Phi, T, problem.allowed, hp, beta, alpha / problem.n_colloc)


def pareto_beta(problem: SplineProblem, state: TrainState, hp: Hyperparams, alpha: float,
                grid=BETA_GRID) -> float:
    """Knee of the (support size, log residual) curve over a log grid of beta."""
    Phi, T = problem.library_matrix(state.P)
    sizes, resid = [], []
    for beta in grid:
        Lam = sparse_regression(problem, state.P, hp, alpha, beta)
        R = Phi @ Lam.values - T
        sizes.append(Lam.nnz)
        resid.append(np.log10(max(alpha * float(np.sum(R * R)) / problem.n_colloc, 1e-300)))
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(resid)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float(grid[len(grid) // 2])
    xn = (x - x.min()) / np.ptp(x)
    yn = (y - y.min()) / np.ptp(y)
    a = np.array([xn[0], yn[0]])
    b = np.array([xn[-1], yn[-1]])
    d = b - a
    dist = np.abs(d[0] * (yn - a[1]) - d[1] * (xn - a[0])) / np.hypot(*d)
    return float(grid[int(np.argmax(dist))])


@dataclass
class AdoRecord:
    iteration: int
    data: float
    physics: float
    l0_count: int
    total: float
    accepted: bool
    best_total: float
    support_sizes: tuple[int, ...]


def ado(state: TrainState, problem: SplineProblem, hp: Hyperparams, alpha: float,
        beta: float) -> tuple[TrainState, list[AdoRecord]]:
    """Alternate sparse regression on the best splines with gradient refinement.

    A candidate (splines, pruned coefficients) replaces the incumbent only if
    it lowers data + alpha * physics + beta * nnz.
    """
    best = state.copy()
    best.best_loss = loss_of(best, problem, alpha, beta).total
    history: list[AdoRecord] = []
    for k in range(1, hp.K + 1):
        Lam = sparse_regression(problem, best.P, hp, alpha, beta)
        empty = np.flatnonzero(Lam.support.sum(axis=0) == 0)
        if empty.size:
            raise TrainingError(f"equation {int(empty[0])} lost all terms", "ado", k)
        cand = TrainState([p.copy() for p in best.P], Lam, seed=hp.seed, scales=best.scales)
        cand = _refine(cand, problem, hp, alpha, hp.ado_epochs, "ado")
        loss = loss_of(cand, problem, alpha, beta)
        accepted = loss.total < best.best_loss
        if accepted:
            cand.best_loss = loss.total
            best = cand
        history.append(AdoRecord(k, loss.data, loss.physics, loss.l0_count, loss.total, accepted,
                                 best.best_loss, tuple(int(c) for c in Lam.support.sum(axis=0))))
        log.info("ado %d: total=%.6g nnz=%d accepted=%s", k, loss.total, loss.l0_count, accepted)
    return best, history


def posttune(state: TrainState, problem: SplineProblem, hp: Hyperparams, alpha: float,
             beta: float) -> TrainState:
    """Refine splines and surviving coefficients on the frozen support."""
    if np.any(state.Lam.support.sum(axis=0) == 0):
        raise TrainingError("cannot post-tune: an equation has an empty support", "posttune")
    start = loss_of(state, problem, alpha, beta).total
    cand = _refine(state.copy(), problem, hp, alpha, hp.tune_epochs, "posttune")
    # drop coefficients the descent drove to exactly zero from the support
    cand.Lam = CoefficientMatrix(cand.Lam.values, cand.Lam.values != 0)
    end = loss_of(cand, problem, alpha, beta).total
    if end <= start:
        cand.best_loss = end
        return cand
    out = state.copy()
    out.best_loss = start
    return out
