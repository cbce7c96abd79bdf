"""Symmetric SNE embedding of stacked modality features and cosine affinity.

The high-dimensional affinities are Gaussian conditionals with per-point
bandwidths tuned to a target perplexity; the low-dimensional affinities use a
Gaussian kernel normalized over all ordered pairs (SNE, not t-SNE). The
embedding is optimized with Adam.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NumericalError, ValidationError

ENTROPY_TOL = 1e-4
SIGMA_SEARCH_STEPS = 50


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class EmbeddingConfig:
    target_dim: int = 2
    iterations: int = 500
    perplexity: float = 30.0
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0

    def __post_init__(self):
        if self.target_dim < 1:
            raise ValidationError("target_dim must be positive")
        if self.iterations < 0:
            raise ValidationError("iterations must be non-negative")
        if not self.perplexity > 0:
            raise ValidationError("perplexity must be positive")

    def effective_perplexity(self, n: int) -> float:
        return min(self.perplexity, (n - 1) / 3.0)


@dataclass(frozen=True)
class AffinitySample:
    points: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 4:
            raise ValidationError("affinity sample needs an n x d matrix with n >= 4")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("affinity sample has non-finite entries")
        if len(self.labels) != pts.shape[0]:
            raise ValidationError("one label per row required")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", tuple(self.labels))


@dataclass(frozen=True)
class EmbeddingSolution:
    Y: np.ndarray
    final_cost: float
    cost_trace: tuple[float, ...]


def squared_distances(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_conditional(dist_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Gaussian conditional over one row of off-diagonal distances and its entropy in bits."""
    shifted = dist_row - dist_row.min()
    w = np.exp(-beta * shifted)
    p = w / w.sum()
    nz = p > 0
    entropy = -np.sum(p[nz] * np.log2(p[nz]))
    return p, float(entropy)


def calibrate_sigmas(points: np.ndarray, perplexity: float) -> np.ndarray:
    """Per-point Gaussian widths whose conditionals reach ``log2(perplexity)`` bits.

    Bisection on ``log(1 / 2 sigma^2)``; entropy decreases monotonically in
    that parameter. Rows whose distances are all equal get ``sigma = 1``.
    """
    X = np.asarray(points, dtype=float)
    n = X.shape[0]
    if n < 4:
        raise ValidationError("need at least 4 points")
    if not 0 < perplexity < n:
        raise ValidationError(f"perplexity {perplexity} must lie in (0, n={n})")
    D = squared_distances(X)
    if not np.all(np.isfinite(D)):
        raise NumericalError("non-finite pairwise distances")

    target = np.log2(perplexity)
    sigmas = np.ones(n)
    for i in range(n):
        row = np.delete(D[i], i)
        spread = row.max() - row.min()
        if spread == 0.0:
            continue
        # bracket in log-beta space scaled by the row's distance spread
        lo, hi = np.log(1e-12 / spread), np.log(1e12 / spread)
        log_beta = 0.5 * (lo + hi)
        for _ in range(SIGMA_SEARCH_STEPS):
            log_beta = 0.5 * (lo + hi)
            _, h = _row_conditional(row, np.exp(log_beta))
            if abs(h - target) < ENTROPY_TOL * 1e-3:
                break
            if h > target:
                lo = log_beta
            else:
                hi = log_beta
        sigmas[i] = np.sqrt(1.0 / (2.0 * np.exp(log_beta)))
    return sigmas


def joint_probabilities(points: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Row-conditional Gaussian affinities; each row sums to 1, zero diagonal."""
    D = squared_distances(points)
    n = D.shape[0]
    P = np.zeros_like(D)
    mask = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = D[i, mask[i]]
        beta = 1.0 / (2.0 * sigmas[i] ** 2)
        w = np.exp(-beta * (row - row.min()))
        P[i, mask[i]] = w / w.sum()
    return P


def symmetrize(P_conditional: np.ndarray) -> np.ndarray:
    """``(p_{j|i} + p_{i|j}) / 2n``: symmetric, sums to 1 over the whole matrix."""
    n = P_conditional.shape[0]
    return (P_conditional + P_conditional.T) / (2.0 * n)


def low_dim_affinities(Y: np.ndarray) -> np.ndarray:
    D = squared_distances(Y)
    n = D.shape[0]
    off = ~np.eye(n, dtype=bool)
    shift = D[off].min() if n > 1 else 0.0
    W = np.exp(-(D - shift))
    W[~off] = 0.0
    return W / W.sum()


def kl_cost(P: np.ndarray, Q: np.ndarray) -> float:
    nz = P > 0
    return float(np.sum(P[nz] * np.log(P[nz] / Q[nz])))


def kl_gradient(P: np.ndarray, Q: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j)`` for symmetric ``P``."""
    M = P - Q
    return 4.0 * (M.sum(axis=1)[:, None] * Y - M @ Y)


class Adam:
    def __init__(self, shape, config: AdamConfig):
        self.cfg = config
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Return the additive update for ``grad`` (a descent step)."""
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        m_hat = self.m / (1 - c.beta1**self.t)
        v_hat = self.v / (1 - c.beta2**self.t)
        return -c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon)


def embed(sample: AffinitySample, config: EmbeddingConfig = EmbeddingConfig()) -> EmbeddingSolution:
    """Fit a ``target_dim`` embedding of ``sample.points`` minimizing KL(P||Q).

    If the last iterate ends above the initial cost (possible with a large
    step size) the lowest-cost iterate is returned instead.
    """
    X = sample.points
    n, d = X.shape
    if config.target_dim >= d:
        raise ValidationError(f"target_dim {config.target_dim} must be below input dim {d}")
    perplexity = config.effective_perplexity(n)
    P = symmetrize(joint_probabilities(X, calibrate_sigmas(X, perplexity)))

    rng = np.random.default_rng(config.seed)
    Y = rng.normal(0.0, 1e-2, size=(n, config.target_dim))  # variance 1e-4
    opt = Adam(Y.shape, config.adam)

    Q = low_dim_affinities(Y)
    trace = [kl_cost(P, Q)]
    best_Y, best_cost = Y.copy(), trace[0]
    for it in range(1, config.iterations + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            Y = Y + opt.step(kl_gradient(P, Q, Y))
            Q = low_dim_affinities(Y)
            cost = kl_cost(P, Q)
        if not np.isfinite(cost):
            raise NumericalError(f"embedding diverged at iteration {it}")
        trace.append(cost)
        if cost < best_cost:
            best_Y, best_cost = Y.copy(), cost
    if trace[-1] > trace[0]:
        Y = best_Y
    return EmbeddingSolution(Y=Y, final_cost=float(kl_cost(P, low_dim_affinities(Y))), cost_trace=tuple(trace))


@dataclass(frozen=True)
class CosineSummary:
    value: float
    pairs: int
    skipped: int


def cosine_summary(Y_a: np.ndarray, Y_b: np.ndarray) -> CosineSummary:
    """Mean row-wise cosine of two tick-aligned embeddings.

    Rows are paired by index and the longer input is truncated. Pairs where
    either row has zero norm are skipped and counted.
    """
    A = np.asarray(Y_a, dtype=float)
    B = np.asarray(Y_b, dtype=float)
    n = min(len(A), len(B))
    A, B = A[:n], B[:n]
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    ok = (na > 0) & (nb > 0)
    if not ok.any():
        raise NumericalError("no non-zero row pairs for cosine similarity")
    cos = np.sum(A[ok] * B[ok], axis=1) / (na[ok] * nb[ok])
    return CosineSummary(float(np.clip(cos.mean(), -1.0, 1.0)), int(ok.sum()), int(n - ok.sum()))


def average_cosine_similarity(Y_a: np.ndarray, Y_b: np.ndarray) -> float:
    return cosine_summary(Y_a, Y_b).value
