"""Entropic optimal transport on point clouds with squared Euclidean cost.

Numeric solvers work on numpy arrays; the ``*_graph`` builders unroll the
same log-domain iterations as :mod:`otdg.diffmath` nodes so gradients with
respect to point positions come from plain reverse-mode AD.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from . import diffmath as dm
from .measures import EmpiricalMeasure

DEFAULT_EPS = 0.5
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500
DEFAULT_UNROLL = 3
WARM_TOL = 1e-9
SCALING = 0.5


class OTError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TransportPlan:
    plan: np.ndarray
    cost: float
    entropic: float
    eps: float
    iterations_used: int
    converged: bool
    marginal_error: float

    @property
    def value(self) -> float:
        """Entropic OT value: transport cost plus ``eps * KL(plan | a x b)``."""
        return self.cost + self.entropic


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    measure: EmpiricalMeasure
    objective_trace: list = field(default_factory=list)
    support_shift_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def support(self) -> np.ndarray:
        return self.measure.points


def squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = np.sum(x**2, 1)[:, None] + np.sum(y**2, 1)[None, :] - 2.0 * x @ y.T
    return np.maximum(d, 0.0)


def eps_schedule(x: np.ndarray, y: np.ndarray, eps: float) -> list[float]:
    """Annealing schedule from the largest squared distance down to ``eps``."""
    return _schedule(float(squared_distances(x, y).max()), eps)


def _schedule(diam2: float, eps: float) -> list[float]:
    # the starting scale is a power of two so tiny perturbations of the
    # points leave the schedule unchanged
    if diam2 <= eps:
        return [eps]
    e = 2.0 ** math.ceil(math.log2(diam2))
    sched = []
    while e > eps:
        sched.append(e)
        e *= SCALING
    sched.append(eps)
    return sched


def _check_eps(eps):
    if not eps > 0:
        raise OTError(f"eps must be positive, got {eps!r}")


def _as_measure(m) -> EmpiricalMeasure:
    if isinstance(m, EmpiricalMeasure):
        return m
    return EmpiricalMeasure(np.asarray(m, dtype=np.float64))


def _lse_update(logw, pot, C, e, axis):
    # exact log-domain c-transform; used when the stabilized kernel underflows
    if axis == 1:
        return -e * logsumexp(logw[None, :] + (pot[None, :] - C) / e, axis=1)
    return -e * logsumexp(logw[:, None] + (pot[:, None] - C) / e, axis=0)


def _solve(loga, logb, C, eps, max_iter, tol, averaged=False):
    """Stabilized log-domain Sinkhorn with eps-scaling.

    The potentials ``f, g`` are updated through matrix-vector products with
    the kernel ``exp((f0 + g0 - C) / eps)`` built at reference potentials,
    which are refreshed whenever the potentials drift by more than 30 eps.

    ``averaged=False`` alternates exact half-steps and stops on the L1
    row-marginal violation. ``averaged=True`` uses symmetrized updates
    ``f <- (f + T(g)) / 2`` and stops when the extrapolated dual value moves
    by less than ``tol``; the returned potentials are the extrapolation
    ``T(g), T(f)``, whose dual value converges much faster than the plan.

    Returns ``(f, g, iterations, converged, error)``.
    """
    n, m = C.shape
    a, b = np.exp(loga), np.exp(logb)
    f = np.zeros(n)
    g = np.zeros(m)
    sched = _schedule(float(C.max()), eps)
    iters = 0
    err = np.inf
    converged = False
    prev_val = None
    ft, gt = f, g

    def c_transforms(f_, g_, f0, g0, K, e):
        with np.errstate(divide="ignore", over="ignore"):
            r = K @ (b * np.exp((g_ - g0) / e))
            c = K.T @ (a * np.exp((f_ - f0) / e))
            new_f = f0 - e * np.log(r)
            new_g = g0 - e * np.log(c)
        if not (np.all(np.isfinite(new_f)) and np.all(np.isfinite(new_g))):
            new_f = _lse_update(logb, g_, C, e, 1)
            new_g = _lse_update(loga, f_, C, e, 0)
        return new_f, new_g

    for level, e in enumerate(sched):
        last = level == len(sched) - 1
        f0, g0 = f.copy(), g.copy()
        K = np.exp((f0[:, None] + g0[None, :] - C) / e)
        while iters < max_iter:
            iters += 1
            if averaged:
                ft, gt = c_transforms(f, g, f0, g0, K, e)
                val = float(a @ ft + b @ gt)
                err = np.inf if prev_val is None else abs(val - prev_val)
                prev_val = val
                f, g = 0.5 * (f + ft), 0.5 * (g + gt)
            else:
                with np.errstate(divide="ignore", over="ignore"):
                    g = g0 - e * np.log(K.T @ (a * np.exp((f - f0) / e)))
                if not np.all(np.isfinite(g)):
                    g = _lse_update(loga, f, C, e, 0)
                with np.errstate(divide="ignore", over="ignore"):
                    f_new = f0 - e * np.log(K @ (b * np.exp((g - g0) / e)))
                if not np.all(np.isfinite(f_new)):
                    f_new = _lse_update(logb, g, C, e, 1)
                err = float(np.sum(np.abs(a * np.expm1((f - f_new) / e))))
                f = f_new
            drift = max(np.abs(f - f0).max(), np.abs(g - g0).max()) / e
            if drift > 30:
                f0, g0 = f.copy(), g.copy()
                K = np.exp((f0[:, None] + g0[None, :] - C) / e)
            if not last:
                break
            if err < tol:
                converged = True
                break
        if iters >= max_iter and not converged:
            break
    if averaged:
        e = sched[-1]
        f, g = _lse_update(logb, g, C, e, 1), _lse_update(loga, f, C, e, 0)
    elif not converged:
        # an early stop may leave potentials from a coarser level; one exact
        # half-step at the target eps keeps the plan finite with exact rows
        f = _lse_update(logb, g, C, eps, 1)
        P, _ = _plan(loga, logb, f, g, C, eps)
        err = float(np.abs(P.sum(0) - b).sum())
    return f, g, iters, converged, err


def _plan(loga, logb, f, g, C, eps):
    logp = loga[:, None] + logb[None, :] + (f[:, None] + g[None, :] - C) / eps
    return np.exp(logp), logp


def sinkhorn_ot(
    a,
    b,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> TransportPlan:
    """Entropic transport plan between two empirical measures.

    Iterates until the L1 row-marginal violation drops below ``tol`` (column
    marginals are exact after each half-step) or ``max_iter`` is reached.
    Non-convergence is reported through ``converged=False``.
    """
    _check_eps(eps)
    a, b = _as_measure(a), _as_measure(b)
    if a.dim != b.dim:
        raise OTError(f"dimension mismatch: {a.dim} vs {b.dim}")
    C = squared_distances(a.points, b.points)
    with np.errstate(divide="ignore"):
        loga, logb = np.log(a.weights), np.log(b.weights)
    f, g, iters, converged, err = _solve(loga, logb, C, eps, max_iter, tol)
    P, logp = _plan(loga, logb, f, g, C, eps)
    cost = float(np.sum(P * C))
    mask = P > 0
    entropic = float(eps * np.sum(P[mask] * (logp[mask] - (loga[:, None] + logb[None, :])[mask])))
    marg = float(np.abs(P.sum(1) - a.weights).sum() + np.abs(P.sum(0) - b.weights).sum())
    return TransportPlan(P, cost, entropic, eps, iters, converged, marg)


def entropic_ot_value(
    a, b, eps: float = DEFAULT_EPS, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL
) -> float:
    """Dual entropic OT value ``<a, f> + <b, g>`` (equals cost + entropy at optimum)."""
    _check_eps(eps)
    a, b = _as_measure(a), _as_measure(b)
    C = squared_distances(a.points, b.points)
    loga, logb = np.log(a.weights), np.log(b.weights)
    f, g, *_ = _solve(loga, logb, C, eps, max_iter, tol, averaged=True)
    return float(a.weights @ f + b.weights @ g)


def sinkhorn_divergence(
    a, b, eps: float = DEFAULT_EPS, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL
) -> float:
    """Debiased Sinkhorn divergence ``OT(a,b) - OT(a,a)/2 - OT(b,b)/2``."""
    a, b = _as_measure(a), _as_measure(b)
    ab = entropic_ot_value(a, b, eps, max_iter, tol)
    aa = entropic_ot_value(a, a, eps, max_iter, tol)
    bb = entropic_ot_value(b, b, eps, max_iter, tol)
    return ab - 0.5 * aa - 0.5 * bb


def exact_ot(a, b, power: int = 2) -> float:
    """Exact OT cost between uniform clouds of equal size via assignment.

    With ``power=2`` this is W2^2; with ``power=1`` it is W1.
    """
    a, b = _as_measure(a), _as_measure(b)
    if a.n != b.n or not (a.is_uniform() and b.is_uniform()):
        raise OTError(
            "exact_ot needs uniform weights and equal sizes; use sinkhorn_ot for general measures"
        )
    C = squared_distances(a.points, b.points)
    if power != 2:
        C = np.sqrt(C) ** power
    rows, cols = linear_sum_assignment(C)
    return float(C[rows, cols].mean())


def brute_force_ot(a, b, power: int = 2) -> float:
    """Minimum over all permutations; only for tiny clouds."""
    a, b = _as_measure(a), _as_measure(b)
    C = squared_distances(a.points, b.points)
    if power != 2:
        C = np.sqrt(C) ** power
    n = a.n
    idx = np.arange(n)
    return float(min(C[idx, list(p)].mean() for p in itertools.permutations(range(n))))


# ---------------------------------------------------------------------------
# barycenter


def _assignment_plan(a: EmpiricalMeasure, b: EmpiricalMeasure) -> TransportPlan:
    if a.n != b.n or not (a.is_uniform() and b.is_uniform()):
        raise OTError("exact plans need uniform measures of equal size; pass eps > 0")
    C = squared_distances(a.points, b.points)
    rows, cols = linear_sum_assignment(C)
    P = np.zeros_like(C)
    P[rows, cols] = 1.0 / a.n
    return TransportPlan(P, float(C[rows, cols].mean()), 0.0, 0.0, 1, True, 0.0)


def free_support_barycenter(
    measures: Sequence,
    weights=None,
    k: int | None = None,
    eps: float | None = 1e-2,
    outer_iters: int = 50,
    tol: float = 1e-4,
    seed=0,
    init=None,
    max_iter: int = DEFAULT_MAX_ITER,
    sinkhorn_tol: float = DEFAULT_TOL,
) -> BarycenterResult:
    """Free-support W2 barycenter with ``k`` uniformly weighted support points.

    Alternates entropic plans from the current support to every input
    measure with a barycentric-projection update of the support. An
    iteration whose objective rises by more than 1e-6 is rejected and the
    loop stops. ``eps=None`` uses exact assignment plans instead, which
    requires every measure to be uniform with exactly ``k`` points.
    """
    measures = [_as_measure(m) for m in measures]
    if not measures:
        raise OTError("need at least one measure")
    S = len(measures)
    lam = np.full(S, 1.0 / S) if weights is None else np.asarray(weights, dtype=np.float64)
    if lam.shape != (S,) or np.any(lam < 0) or abs(lam.sum() - 1) > 1e-9:
        raise OTError("barycenter weights must be convex")
    k = measures[0].n if k is None else int(k)
    if k < 1:
        raise OTError("k must be >= 1")

    if init is not None:
        X = np.array(init, dtype=np.float64)
    else:
        # duplicated support points can never separate, so draw from distinct ones
        pooled = np.unique(np.vstack([m.points for m in measures]), axis=0)
        rng = np.random.default_rng(seed)
        idx = rng.choice(pooled.shape[0], size=k, replace=k > pooled.shape[0])
        X = pooled[np.sort(idx)].copy()

    objective, shifts = [], []
    converged = False
    prev_X = X
    for _ in range(outer_iters):
        support = EmpiricalMeasure(X)
        if eps is None:
            plans = [_assignment_plan(support, m) for m in measures]
        else:
            plans = [sinkhorn_ot(support, m, eps, max_iter, sinkhorn_tol) for m in measures]
        obj = float(sum(l * p.value for l, p in zip(lam, plans)))
        if objective and obj > objective[-1] + 1e-6:
            X = prev_X
            break
        objective.append(obj)
        new_X = np.zeros_like(X)
        for l, p, m in zip(lam, plans, measures):
            rows = p.plan.sum(1, keepdims=True)
            new_X += l * (p.plan @ m.points) / rows
        shift = float(np.max(np.linalg.norm(new_X - X, axis=1)))
        shifts.append(shift)
        prev_X, X = X, new_X
        if shift < tol:
            converged = True
            break
    return BarycenterResult(EmpiricalMeasure(X), objective, shifts, converged)


# ---------------------------------------------------------------------------
# differentiable builders


def _cost_graph(x: dm.Node, y: dm.Node) -> dm.Node:
    xx = dm.reduce_sum(dm.square(x), axis=1, keepdims=True)
    yy = dm.transpose(dm.reduce_sum(dm.square(y), axis=1, keepdims=True))
    return xx + yy - 2.0 * dm.matmul(x, dm.transpose(y))


def _value_of(node_or_array, bindings=None) -> np.ndarray:
    if isinstance(node_or_array, dm.Node):
        return dm.evaluate(node_or_array, bindings or {})
    return np.asarray(node_or_array, dtype=np.float64)


def entropic_ot_graph(
    x: dm.Node,
    y: dm.Node | None,
    eps: float,
    n_iter: int = DEFAULT_UNROLL,
    a=None,
    b=None,
    schedule: Sequence[float] | None = None,
    bindings=None,
    warm_start: bool = True,
    tol: float = WARM_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> dm.Node:
    """Entropic OT value as a graph node.

    With ``warm_start`` the potentials are first converged numerically and
    enter the graph as constants; ``n_iter`` symmetrized iterations and the
    final extrapolation are then unrolled, and gradients flow through those
    alone. Without it every annealing step and ``n_iter`` iterations at
    ``eps`` are unrolled from zero potentials.

    ``y=None`` builds the symmetric self-transport ``OT(x, x)``. Weights
    default to uniform; ``schedule`` defaults to :func:`eps_schedule` on the
    current point values.
    """
    _check_eps(eps)
    sym = y is None
    x = dm._lift(x)
    yv_node = x if sym else dm._lift(y)
    xv = _value_of(x, bindings)
    yv = xv if sym else _value_of(yv_node, bindings)
    n, m = xv.shape[0], yv.shape[0]
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, float)
    b = a if sym else (np.full(m, 1.0 / m) if b is None else np.asarray(b, float))
    loga_col = np.log(a)[:, None]
    logb_row = np.log(b)[None, :]
    if warm_start:
        f0, g0, *_ = _solve(
            loga_col.ravel(), logb_row.ravel(), squared_distances(xv, yv), eps,
            max_iter, tol, averaged=True,
        )
        steps = [eps] * n_iter
    else:
        if schedule is None:
            schedule = eps_schedule(xv, yv, eps)
        steps = list(schedule[:-1]) + [schedule[-1]] * n_iter
        f0, g0 = np.zeros(n), np.zeros(m)
    C = _cost_graph(x, yv_node)

    f = dm.constant(f0[:, None])
    g = dm.constant(g0[None, :])
    scaled = {eps: C * (1.0 / eps)}

    def t_f(g_, e):
        return -e * dm.logsumexp(g_ * (1.0 / e) - scaled[e] + logb_row, axis=1, keepdims=True)

    def t_g(f_, e):
        return -e * dm.logsumexp(f_ * (1.0 / e) - scaled[e] + loga_col, axis=0, keepdims=True)

    for e in steps:
        if e not in scaled:
            scaled[e] = C * (1.0 / e)
        if sym:
            f = 0.5 * (f + t_f(dm.transpose(f), e))
        else:
            f, g = 0.5 * (f + t_f(g, e)), 0.5 * (g + t_g(f, e))
    e = eps
    if sym:
        f = t_f(dm.transpose(f), e)
        return 2.0 * dm.reduce_sum(f * a[:, None])
    f, g = t_f(g, e), t_g(f, e)
    return dm.reduce_sum(f * a[:, None]) + dm.reduce_sum(g * b[None, :])


def sinkhorn_divergence_graph(
    x: dm.Node,
    y,
    eps: float,
    n_iter: int = DEFAULT_UNROLL,
    a=None,
    b=None,
    bindings=None,
    warm_start: bool = True,
    tol: float = WARM_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> dm.Node:
    """Differentiable debiased Sinkhorn divergence between two clouds."""
    x = dm._lift(x)
    y = dm._lift(y)
    opts = dict(bindings=bindings, warm_start=warm_start, tol=tol, max_iter=max_iter)
    sched = eps_schedule(_value_of(x, bindings), _value_of(y, bindings), eps)
    xy = entropic_ot_graph(x, y, eps, n_iter, a, b, schedule=sched, **opts)
    xx = entropic_ot_graph(x, None, eps, n_iter, a, schedule=sched, **opts)
    yy = entropic_ot_graph(y, None, eps, n_iter, b, schedule=sched, **opts)
    return xy - 0.5 * xx - 0.5 * yy


def barycenter_loss(
    domain_features: Sequence[dm.Node],
    bary,
    eps: float = DEFAULT_EPS,
    n_iter: int = DEFAULT_UNROLL,
    bindings=None,
    tol: float = WARM_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> dm.Node:
    """Mean Sinkhorn divergence from a detached barycenter to each domain.

    ``bary`` may be an :class:`EmpiricalMeasure`, an array or a node; it is
    always wrapped in :func:`diffmath.detach`, so only the domain features
    receive gradient.
    """
    if not domain_features:
        raise OTError("need at least one domain")
    if isinstance(bary, EmpiricalMeasure):
        bary_w = bary.weights
        bary = bary.points
    else:
        bary_w = None
    bary_node = dm.detach(dm._lift(bary))
    bv = _value_of(bary_node, bindings)
    w = np.full(bv.shape[0], 1.0 / bv.shape[0]) if bary_w is None else bary_w
    bary_measure = EmpiricalMeasure(bv, w)
    bb_value = entropic_ot_value(bary_measure, bary_measure, eps, max_iter, tol)
    opts = dict(bindings=bindings, tol=tol, max_iter=max_iter)
    total = None
    for z in domain_features:
        z = dm._lift(z)
        bz = entropic_ot_graph(bary_node, z, eps, n_iter, w, None, **opts)
        zz = entropic_ot_graph(z, None, eps, n_iter, None, **opts)
        term = bz - 0.5 * zz - 0.5 * bb_value
        total = term if total is None else total + term
    return total * (1.0 / len(domain_features))
