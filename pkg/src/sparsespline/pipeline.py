"""End-to-end discovery: pre-training, alternating sparse regression, post-tuning."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from .ado import (AdoRecord, TrainState, ado, build_problem, infer_order, loss_of,
                  pareto_beta, posttune, pretrain, resolve_alpha)
from .data import Dataset
from .errors import TrainingError
from .library import CandidateLibrary
from .model import DiscoveredModel
from .objective import Hyperparams, LossBreakdown

log = logging.getLogger(__name__)


@dataclass
class DiscoveryResult:
    model: DiscoveredModel
    history: list[AdoRecord]
    pretrain_loss: LossBreakdown
    final_loss: LossBreakdown
    alpha: float
    beta: float
    runtime: float
    state: TrainState


def discover(dataset: Dataset, library: CandidateLibrary, hp: Hyperparams,
             order: int | None = None) -> DiscoveryResult:
    start = time.perf_counter()
    order = order or infer_order(dataset, library)
    problem = build_problem(dataset, library, hp, order)
    alpha = resolve_alpha(dataset, hp, order)
    state = pretrain(problem, hp, alpha)
    beta = hp.beta if hp.beta is not None else pareto_beta(problem, state, hp, alpha)
    pre = loss_of(state, problem, alpha, beta)
    log.info("pre-training done: %s (alpha=%.3g, beta=%.3g)", pre, alpha, beta)
    best, history = ado(state, problem, hp, alpha, beta)
    if not any(h.accepted for h in history):
        raise TrainingError("no sparse candidate improved on the dense pre-trained model; "
                            "try a smaller beta or larger delta_tol", "ado", hp.K)
    final = posttune(best, problem, hp, alpha, beta)
    loss = loss_of(final, problem, alpha, beta)
    model = DiscoveredModel(library, final.Lam.values.copy(), order, {
        "seed": hp.seed,
        "alpha": alpha,
        "beta": beta,
        "ado_accepted": [h.iteration for h in history if h.accepted],
        "final_loss": loss.total,
    })
    return DiscoveryResult(model, history, pre, loss, alpha, beta,
                           time.perf_counter() - start, final)
