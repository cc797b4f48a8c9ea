"""Probability measures: empirical point clouds and two analytic families.

Gaussian and histogram measures carry closed-form KL, L1, W2 and second
moments; they are the substrate for the bound checks. Empirical measures
are what every encoder pushforward looks like in practice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate
from scipy.stats import norm

WEIGHT_TOL = 1e-9


class MeasureError(ValueError):
    pass


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if ndim == 2 and arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != ndim:
        raise MeasureError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted point cloud in R^d. Weights default to uniform."""

    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = _frozen(self.points, 2, "points")
        if pts.shape[0] < 1:
            raise MeasureError("an empirical measure needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise MeasureError("points must be finite")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.array(self.weights, dtype=np.float64).ravel()
        if w.shape[0] != pts.shape[0]:
            raise MeasureError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise MeasureError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_uniform(self) -> bool:
        return bool(np.allclose(self.weights, 1.0 / self.n, rtol=0, atol=1e-12))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def translate(self, t) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points + np.asarray(t, dtype=np.float64), self.weights)


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.array(self.mean, dtype=np.float64))
        c = np.atleast_2d(np.array(self.cov, dtype=np.float64))
        if c.shape != (m.size, m.size):
            raise MeasureError(f"cov shape {c.shape} does not match mean of size {m.size}")
        if not np.allclose(c, c.T, rtol=0, atol=1e-10):
            raise MeasureError("covariance must be symmetric")
        if np.linalg.eigvalsh(c)[0] <= 0:
            raise MeasureError("covariance must be positive definite")
        m.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @classmethod
    def isotropic(cls, mean, var: float = 1.0) -> "GaussianMeasure":
        m = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        return cls(m, var * np.eye(m.size))

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf_grad(self, x) -> np.ndarray:
        """Natural-log density gradient, ``-cov^{-1}(x - mean)``, row-wise."""
        x = np.atleast_2d(x)
        return -np.linalg.solve(self.cov, (x - self.mean).T).T

    def pdf(self, x) -> np.ndarray:
        from scipy.stats import multivariate_normal

        return multivariate_normal(self.mean, self.cov).pdf(x)


@dataclass(frozen=True, eq=False)
class HistogramMeasure:
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        s = _frozen(self.support, 2, "support")
        p = np.array(self.probs, dtype=np.float64).ravel()
        if p.shape[0] != s.shape[0]:
            raise MeasureError(f"{s.shape[0]} bins but {p.shape[0]} probabilities")
        if np.any(p < 0) or abs(p.sum() - 1.0) > WEIGHT_TOL:
            raise MeasureError("probs must lie on the simplex")
        p.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "probs", p)

    @classmethod
    def on_grid(cls, probs) -> "HistogramMeasure":
        p = np.asarray(probs, dtype=np.float64)
        return cls(np.arange(p.size, dtype=np.float64)[:, None], p)


Measure = Union[EmpiricalMeasure, GaussianMeasure, HistogramMeasure]


def sample(g: GaussianMeasure, n: int, seed) -> EmpiricalMeasure:
    """``n`` i.i.d. draws from ``g`` with uniform weights."""
    if n < 1:
        raise MeasureError("n must be >= 1")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(g.cov)
    pts = g.mean + rng.standard_normal((n, g.dim)) @ chol.T
    return EmpiricalMeasure(pts)


def _check_shared_support(p: HistogramMeasure, q: HistogramMeasure):
    if p.support.shape != q.support.shape or not np.array_equal(p.support, q.support):
        raise MeasureError("histograms must share the same support")


def kl_divergence(p: Measure, q: Measure) -> float:
    """KL(p || q) in nats. Returns ``inf`` when p charges a bin q does not."""
    if isinstance(p, GaussianMeasure) and isinstance(q, GaussianMeasure):
        if p.dim != q.dim:
            raise MeasureError("dimension mismatch")
        k = p.dim
        q_inv = np.linalg.inv(q.cov)
        dm = q.mean - p.mean
        _, logdet_p = np.linalg.slogdet(p.cov)
        _, logdet_q = np.linalg.slogdet(q.cov)
        val = 0.5 * (np.trace(q_inv @ p.cov) + dm @ q_inv @ dm - k + logdet_q - logdet_p)
        return max(float(val), 0.0)
    if isinstance(p, HistogramMeasure) and isinstance(q, HistogramMeasure):
        _check_shared_support(p, q)
        mask = p.probs > 0
        if np.any(q.probs[mask] == 0):
            return float("inf")
        return float(np.sum(p.probs[mask] * np.log(p.probs[mask] / q.probs[mask])))
    raise MeasureError(f"KL not available for {type(p).__name__} vs {type(q).__name__}")


def l1_distance(p: Measure, q: Measure) -> float:
    """L1 distance between densities (twice the total variation)."""
    if isinstance(p, HistogramMeasure) and isinstance(q, HistogramMeasure):
        _check_shared_support(p, q)
        return float(np.abs(p.probs - q.probs).sum())
    if isinstance(p, GaussianMeasure) and isinstance(q, GaussianMeasure):
        if p.dim != 1 or q.dim != 1:
            raise MeasureError("continuous L1 is only supported for 1-D Gaussians")
        m1, s1 = float(p.mean[0]), float(np.sqrt(p.cov[0, 0]))
        m2, s2 = float(q.mean[0]), float(np.sqrt(q.cov[0, 0]))
        if m1 == m2 and s1 == s2:
            return 0.0

        def integrand(x):
            return abs(norm.pdf(x, m1, s1) - norm.pdf(x, m2, s2))

        lo = min(m1 - 12 * s1, m2 - 12 * s2)
        hi = max(m1 + 12 * s1, m2 + 12 * s2)
        # split at the density crossings so quad sees smooth pieces
        breaks = sorted(b for b in _gaussian_crossings(m1, s1, m2, s2) if lo < b < hi)
        edges = [lo, *breaks, hi]
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(integrand, a, b, epsabs=1e-10, epsrel=1e-10, limit=200)
            total += val
        return float(min(total, 2.0))
    raise MeasureError(f"L1 not available for {type(p).__name__} vs {type(q).__name__}")


def _gaussian_crossings(m1, s1, m2, s2) -> list[float]:
    # roots of log N(x; m1, s1) = log N(x; m2, s2)
    a = 1 / (2 * s2**2) - 1 / (2 * s1**2)
    b = m1 / s1**2 - m2 / s2**2
    c = m2**2 / (2 * s2**2) - m1**2 / (2 * s1**2) + np.log(s2 / s1)
    if abs(a) < 1e-15:
        return [] if abs(b) < 1e-15 else [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = np.sqrt(disc)
    return [(-b - r) / (2 * a), (-b + r) / (2 * a)]


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((a + a.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def w2_gaussian(p: GaussianMeasure, q: GaussianMeasure) -> float:
    """Closed-form (Bures) Wasserstein-2 distance between Gaussians."""
    if not (isinstance(p, GaussianMeasure) and isinstance(q, GaussianMeasure)):
        raise MeasureError("w2_gaussian needs two Gaussian measures")
    if p.dim != q.dim:
        raise MeasureError("dimension mismatch")
    root_q = _psd_sqrt(q.cov)
    cross = _psd_sqrt(root_q @ p.cov @ root_q)
    bures = np.trace(p.cov) + np.trace(q.cov) - 2 * np.trace(cross)
    dm = p.mean - q.mean
    return float(np.sqrt(max(dm @ dm + bures, 0.0)))


def gaussian_barycenter(gaussians, weights=None, tol: float = 1e-12, max_iter: int = 500) -> GaussianMeasure:
    """W2 barycenter of Gaussians via the covariance fixed-point iteration."""
    gaussians = list(gaussians)
    if not gaussians:
        raise MeasureError("need at least one Gaussian")
    lam = np.full(len(gaussians), 1 / len(gaussians)) if weights is None else np.asarray(weights, float)
    mean = sum(l * g.mean for l, g in zip(lam, gaussians))
    cov = sum(l * g.cov for l, g in zip(lam, gaussians))
    for _ in range(max_iter):
        root = _psd_sqrt(cov)
        inv_root = np.linalg.inv(root)
        inner = sum(l * _psd_sqrt(root @ g.cov @ root) for l, g in zip(lam, gaussians))
        new = inv_root @ inner @ inner @ inv_root
        new = (new + new.T) / 2
        if np.max(np.abs(new - cov)) < tol:
            cov = new
            break
        cov = new
    return GaussianMeasure(mean, cov)


def second_moment(m: Measure) -> float:
    """E||x||^2 under ``m``."""
    if isinstance(m, GaussianMeasure):
        return float(np.trace(m.cov) + m.mean @ m.mean)
    if isinstance(m, HistogramMeasure):
        return float(m.probs @ np.sum(m.support**2, axis=1))
    if isinstance(m, EmpiricalMeasure):
        return float(m.weights @ np.sum(m.points**2, axis=1))
    raise MeasureError(f"unsupported measure {type(m).__name__}")
