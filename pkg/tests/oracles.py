"""Independent reference implementations used only by the tests."""

import itertools

import numpy as np


def exhaustive_l0(Phi, y, beta, scale=1.0):
    """Minimise scale*||Phi lam - y||^2 + beta*||lam||_0 by enumerating every support."""
    l = Phi.shape[1]
    best_loss, best = float(scale * (y @ y)), np.zeros(l)
    for k in range(1, l + 1):
        for cols in itertools.combinations(range(l), k):
            idx = list(cols)
            coef, *_ = np.linalg.lstsq(Phi[:, idx], y, rcond=None)
            r = Phi[:, idx] @ coef - y
            loss = float(scale * (r @ r) + beta * k)
            if loss < best_loss - 1e-12:
                best_loss = loss
                best = np.zeros(l)
                best[idx] = coef
    return best, best_loss


def planted_problem(seed, max_terms=12, max_rows=60):
    """Noise-free y = Phi lam with a random sparse lam and well-separated coefficients."""
    rng = np.random.default_rng(seed)
    l = int(rng.integers(4, max_terms + 1))
    N = int(rng.integers(2 * l, max_rows + 1))
    Phi = rng.normal(size=(N, l)) * rng.uniform(0.2, 5.0, l)
    k = int(rng.integers(1, min(4, l) + 1))
    support = np.zeros(l, bool)
    support[rng.choice(l, k, replace=False)] = True
    lam = np.zeros(l)
    lam[support] = rng.uniform(1.0, 3.0, k) * rng.choice([-1, 1], k)
    return Phi, Phi @ lam, lam


def loop_data_loss(P, Nm, Ym):
    total = 0.0
    for p, N, Y in zip(P, Nm, Ym):
        N = N.toarray() if hasattr(N, "toarray") else np.asarray(N)
        for i in range(Y.shape[1]):
            acc = 0.0
            for m in range(Y.shape[0]):
                pred = sum(N[m, s] * p[s, i] for s in range(N.shape[1]))
                acc += (pred - Y[m, i]) ** 2
            total += acc / Y.shape[0]
    return total
