"""Exact (O(n^2)) t-SNE with a monotone-KL safeguard after early exaggeration."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DvecError


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    perplexity_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0:
            raise DvecError("iterations must be positive")
        if self.perplexity <= 1:
            raise DvecError("perplexity must exceed 1")


@dataclass
class TsneResult:
    embedding: np.ndarray    # n x 2
    kl: np.ndarray           # KL(P || Q) after every iteration
    perplexities: np.ndarray  # achieved perplexity of each conditional row
    rejected_steps: int = 0


def squared_distances(X) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_entropy(D, beta):
    """Entropy (nats) and normalized rows of exp(-beta * (d - d_min))."""
    P = np.exp(-beta[:, None] * D)
    np.fill_diagonal(P, 0.0)
    S = P.sum(axis=1)
    H = np.log(S) + beta * np.sum(D * P, axis=1) / S
    return H, P / S[:, None]


def conditional_probabilities(D2, perplexity, tol=1e-4, max_iter=200):
    """Row-wise Gaussian affinities whose perplexity matches ``perplexity``.

    Each row's precision is found by bisection on log(beta). Returns the
    conditional matrix P[i, j] = p(j | i) and the achieved perplexities.
    """
    n = D2.shape[0]
    off = ~np.eye(n, dtype=bool)
    dmin = np.where(off, D2, np.inf).min(axis=1)
    D = np.where(off, D2 - dmin[:, None], 0.0)
    spread = np.maximum(D.max(axis=1), 1e-300)
    target = np.log(perplexity)
    lo = np.log(1e-8 / spread)
    hi = np.log(1e3 / np.maximum(np.where(D > 0, D, np.inf).min(axis=1), 1e-300))
    hi = np.maximum(hi, lo + 1.0)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        H, P = _row_entropy(D, np.exp(mid))
        too_flat = H > target
        lo = np.where(too_flat, mid, lo)
        hi = np.where(too_flat, hi, mid)
        if np.all(np.abs(np.exp(H) - perplexity) < tol):
            break
    H, P = _row_entropy(D, np.exp(0.5 * (lo + hi)))
    return P, np.exp(H)


def _student_t(Y):
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num, num.sum()


def tsne(X, config: TsneConfig = TsneConfig()) -> TsneResult:
    """Embed rows of ``X`` in two dimensions.

    Joint affinities are the symmetrized conditionals. Optimization is
    gradient descent with momentum and per-coordinate gains; for the first
    ``exaggeration_iters`` iterations P is multiplied by ``exaggeration``.
    From then on a step that raises KL(P || Q) is rejected and the step
    size halved, so the KL trace after exaggeration never increases.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 10:
        raise DvecError("tSNE needs at least 10 points")
    if not config.perplexity < (n - 1) / 3.0:
        raise DvecError(f"perplexity {config.perplexity} too large for {n} points")
    rng = np.random.default_rng(config.seed)
    D2 = squared_distances(X)
    off = ~np.eye(n, dtype=bool)
    if np.any(D2[off] == 0):
        warnings.warn("duplicate points in tSNE input; jittering by 1e-9", RuntimeWarning)
        X = X + 1e-9 * rng.standard_normal(X.shape)
        D2 = squared_distances(X)
    Pc, perps = conditional_probabilities(D2, config.perplexity, config.perplexity_tol)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)
    plogp = float(np.sum(P[off] * np.log(P[off])))

    def kl_of(num, Z):
        return plogp - float(np.sum(P[off] * np.log(num[off]))) + float(P.sum()) * np.log(Z)

    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    lr = config.learning_rate
    num, Z = _student_t(Y)
    kl_now = kl_of(num, Z)
    trace = np.empty(config.iterations)
    rejected = 0
    for it in range(config.iterations):
        exag = config.exaggeration if it < config.exaggeration_iters else 1.0
        mom = config.momentum if it < config.momentum_switch else config.final_momentum
        W = (exag * P - num / Z) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        gains = np.where(np.sign(grad) != np.sign(update), gains + 0.2, gains * 0.8)
        np.maximum(gains, 0.01, out=gains)
        step = mom * update - lr * gains * grad
        Y_new = Y + step
        Y_new -= Y_new.mean(axis=0)
        num_new, Z_new = _student_t(Y_new)
        kl_new = kl_of(num_new, Z_new)
        if it >= config.exaggeration_iters and kl_new > kl_now:
            rejected += 1
            lr *= 0.5
            update = np.zeros_like(Y)
            gains = np.ones_like(Y)
        else:
            Y, update, num, Z, kl_now = Y_new, step, num_new, Z_new, kl_new
        trace[it] = kl_now
    return TsneResult(Y, trace, perps, rejected)
