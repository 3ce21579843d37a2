"""Numerical-differentiation baseline: Savitzky-Golay derivatives plus sparse regression.

A minimal stand-in for SINDy-style discovery, with no spline training; it is
used only to contrast with the spline pipeline on identical data and library.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ado import CoefficientMatrix, infer_order, regress_equations, resolve_alpha
from .data import Dataset, savgol_diff
from .library import CandidateLibrary
from .model import DiscoveredModel
from .objective import Hyperparams, allowed_terms


@dataclass
class BaselineResult:
    coefficients: CoefficientMatrix
    model: DiscoveredModel
    derivative_source: str = "savgol"


def sindy_baseline(dataset: Dataset, library: CandidateLibrary, hp: Hyperparams,
                   window: int = 21, polyorder: int = 3) -> BaselineResult:
    order = infer_order(dataset, library)
    n_fit = len(dataset.state_names)
    Phis, Ts = [], []
    for src in dataset.sources:
        smooth, d1 = savgol_diff(src.times, src.states, window, polyorder, deriv=1)
        if order == 1:
            S, D, T = smooth, d1, d1
        else:
            _, d2 = savgol_diff(src.times, src.states, window, polyorder, deriv=2)
            S, D, T = np.hstack([smooth, d1]), np.hstack([d1, d2]), d2
        U = src.inputs if library.uses_inputs else None
        Phis.append(library.evaluate(S, D if library.uses_derivatives else None, U))
        Ts.append(T)
    Phi, T = np.vstack(Phis), np.vstack(Ts)
    # same sparsity trade-off as the spline pipeline: beta against alpha * mean residual
    alpha = resolve_alpha(dataset, hp, order)
    beta = hp.beta if hp.beta is not None else 1e-3 * alpha
    Lam = regress_equations(Phi, T, allowed_terms(library, order, n_fit), hp, beta,
                            alpha / Phi.shape[0])
    model = DiscoveredModel(library, Lam.values.copy(), order,
                            {"method": "internal baseline (Savitzky-Golay)", "window": window,
                             "polyorder": polyorder, "seed": hp.seed})
    return BaselineResult(Lam, model)
