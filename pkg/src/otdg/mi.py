"""Mutual-information gradients for the noisy-encoder objective.

For ``z = f(x) + delta * n`` the MI gradient reduces to score functions:

    grad I = -E[(s_marg(z) - s_cond(z | x))^T d f(x) / d theta]

The conditional score is analytic (``-(z - f(x)) / delta^2``); the marginal
score is estimated with the spectral Stein gradient estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.spatial.distance import cdist, pdist

from . import diffmath as dm

DEFAULT_NUM_EIGEN = 6
DEFAULT_JITTER = 1e-6


class MIError(ValueError):
    pass


def add_noise(features, delta: float, seed) -> np.ndarray:
    """``features + delta * N(0, I)``; identity (a copy) when delta is 0."""
    if delta < 0:
        raise MIError("delta must be nonnegative")
    x = np.asarray(features, dtype=np.float64)
    if delta == 0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return x + delta * rng.standard_normal(x.shape)


@dataclass(frozen=True)
class ScoreEstimate:
    """Estimated ``grad_z log q(z)`` built from a sample of q."""

    eval: Callable[[np.ndarray], np.ndarray]
    num_eigen: int
    bandwidth: float

    def __call__(self, z) -> np.ndarray:
        return self.eval(z)


def median_bandwidth(samples: np.ndarray) -> float:
    d = pdist(samples)
    h = float(np.median(d)) if d.size else 1.0
    return h if h > 0 else 1.0


def _top_eigen(K: np.ndarray, k: int):
    n = K.shape[0]
    if n > 4 * k + 20:
        try:
            # fixed start vector keeps Lanczos deterministic
            return eigsh(K, k=k, which="LA", v0=np.ones(n), tol=0)
        except ArpackNoConvergence:
            pass
    return linalg.eigh(K, subset_by_index=[n - k, n - 1])


def ssge_score(
    samples,
    num_eigen: int = DEFAULT_NUM_EIGEN,
    bandwidth: str | float = "median",
    jitter: float = DEFAULT_JITTER,
) -> ScoreEstimate:
    """Spectral Stein score estimate with an RBF kernel.

    The score is expanded in the top ``num_eigen`` Nystrom eigenfunctions
    of the kernel; each coefficient is ``-E[grad psi_j]``, which Stein's
    identity turns into a sample average.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if not (1 <= num_eigen < n):
        raise MIError(f"need n > num_eigen >= 1 (n={n}, num_eigen={num_eigen})")
    h = median_bandwidth(x) if bandwidth == "median" else float(bandwidth)
    if not h > 0:
        raise MIError("bandwidth must be positive")

    K = np.exp(-cdist(x, x, "sqeuclidean") / (2 * h * h))
    K[np.diag_indices_from(K)] += jitter
    eigvals, eigvecs = _top_eigen(K, num_eigen)
    if eigvals[0] <= jitter * 10:
        raise MIError(
            "kernel matrix is numerically singular in the requested eigenspace; "
            "increase jitter or reduce num_eigen"
        )
    # psi_j(z) = sqrt(n)/lam_j * sum_i k(z, x_i) u_ij
    proj = eigvecs * (math.sqrt(n) / eigvals)

    # mean over samples of grad psi_j, using grad_x k(x, x_i) = -(x - x_i) k / h^2
    K0 = K - np.eye(n) * jitter
    KP = K0 @ proj
    grad_mean = -(KP.T @ x - (proj * K0.sum(axis=0)[:, None]).T @ x) / (h * h * n)

    beta = -grad_mean

    def score(z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        squeeze = z.ndim == 1 and d == 1
        z = z.reshape(-1, d)
        kz = np.exp(-cdist(z, x, "sqeuclidean") / (2 * h * h))
        psi = kz @ proj
        out = psi @ beta
        return out[:, 0] if squeeze else out

    return ScoreEstimate(score, num_eigen, h)


def gaussian_mi_oracle(w: float, delta: float) -> tuple[float, float]:
    """MI of ``z = w x + delta n`` with ``x, n ~ N(0, 1)`` and its w-derivative."""
    if not delta > 0:
        raise MIError("delta must be positive")
    mi = 0.5 * math.log1p(w * w / (delta * delta))
    return mi, w / (w * w + delta * delta)


def _score_difference(z_clean, delta, seed, num_eigen, bandwidth):
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(z_clean.shape)
    z = z_clean + delta * noise
    s_marg = ssge_score(z, num_eigen, bandwidth)(z)
    s_cond = -noise / delta  # -(z - f(x)) / delta^2
    return s_marg - s_cond


def mi_surrogate(features: list, delta: float, seed, num_eigen: int = DEFAULT_NUM_EIGEN,
                 bandwidth="median", bindings=None) -> dm.Node:
    """Scalar node whose gradient is ``grad L_i = -grad sum_s I_s``.

    ``features`` are per-domain encoder graph nodes. Each domain gets its
    own noise draw and score fit; the score difference enters as a constant
    so the surrogate's gradient is the estimator above (with a sign flip).
    """
    if not delta > 0:
        raise MIError("delta must be positive; MI of a deterministic encoder diverges")
    if not features:
        raise MIError("need at least one domain")
    seeds = np.random.SeedSequence(_entropy(seed)).spawn(len(features))
    total = None
    for node, ss in zip(features, seeds):
        z = dm.evaluate(node, bindings)
        diff = _score_difference(z, delta, ss, num_eigen, bandwidth)
        # grad I = -mean(diff . df), so grad(-I) = mean(diff . df)
        term = (dm.constant(diff / z.shape[0]) * node).sum()
        total = term if total is None else total + term
    return total


def _entropy(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return int(seed)


@dataclass(frozen=True)
class MIGradient:
    grads: dict  # parameter id -> gradient of L_i


def mige_gradient(encoder, batches, delta: float, num_eigen: int = DEFAULT_NUM_EIGEN, seed=0,
                  bandwidth="median") -> MIGradient:
    """Gradient of ``L_i = -sum_s I(X_s; f(X_s) + delta N)`` w.r.t. encoder parameters.

    ``encoder`` maps an input node to a feature node and exposes its
    parameters through the graph.
    """
    nodes = [encoder(dm.constant(np.asarray(b, dtype=np.float64))) for b in batches]
    surrogate = mi_surrogate(nodes, delta, seed, num_eigen, bandwidth)
    _, grads = dm.value_and_grad(surrogate, None)
    return MIGradient(grads)


__all__ = [
    "MIError",
    "MIGradient",
    "ScoreEstimate",
    "add_noise",
    "gaussian_mi_oracle",
    "median_bandwidth",
    "mi_surrogate",
    "mige_gradient",
    "ssge_score",
]
