"""Numeric checks of the transport-inequality risk bounds.

Everything here works on analytic families (Gaussians, histograms) so the
distances on the right-hand sides are exact; risks are Monte-Carlo
estimates with a reported standard error. Each inequality check returns a
signed slack (``rhs - lhs``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ot
from .measures import (
    EmpiricalMeasure,
    GaussianMeasure,
    HistogramMeasure,
    MeasureError,
    kl_divergence,
    l1_distance,
    sample,
    second_moment,
    w2_gaussian,
)

LN2 = math.log(2.0)
DEFAULT_N_MC = 100_000


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class RegularityConstants:
    c1: float
    c2: float

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise BoundError("regularity constants must be nonnegative")

    @staticmethod
    def worst(*rcs: "RegularityConstants") -> "RegularityConstants":
        return RegularityConstants(max(r.c1 for r in rcs), max(r.c2 for r in rcs))


@dataclass(frozen=True)
class SigmaEstimate:
    value: float
    side: str  # "seen" or "unseen"
    stderr: float = 0.0
    unseen_value: float = float("nan")
    seen_value: float = float("nan")


@dataclass
class BoundReport:
    lhs_risk: float
    term_risks: float
    term_transport: float
    term_sigma: float
    rhs_total: float
    slack: float
    L: float
    C: float
    lam: list
    rc: RegularityConstants
    mc_stderr: float
    # corollary-only split of the transport term
    term_transport_seen_ref: float | None = None
    term_transport_ref_unseen: float | None = None
    theorem_transport: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rc"] = {"c1": self.rc.c1, "c2": self.rc.c2}
        return d


# ---------------------------------------------------------------------------
# regularity and the transport inequality


def regularity_constants_gaussian(g: GaussianMeasure, log_base: str = "2") -> RegularityConstants:
    """Constants (c1, c2) with ||grad log p(x)|| <= c1 ||x|| + c2 for a Gaussian.

    ``grad ln p = -cov^{-1}(x - m)`` gives ``c1 = 1/lambda_min`` and
    ``c2 = ||cov^{-1} m||``; base 2 divides both by ln 2.
    """
    if not isinstance(g, GaussianMeasure):
        raise BoundError("regularity constants are only available for Gaussians")
    lam_min = float(np.linalg.eigvalsh(g.cov)[0])
    if lam_min <= 0:
        raise BoundError("covariance must be positive definite")
    c1 = 1.0 / lam_min
    c2 = float(np.linalg.norm(np.linalg.solve(g.cov, g.mean)))
    scale = _base_scale(log_base)
    return RegularityConstants(c1 * scale, c2 * scale)


def _base_scale(log_base: str) -> float:
    if log_base == "2":
        return 1.0 / LN2
    if log_base == "e":
        return 1.0
    raise BoundError(f"log_base must be '2' or 'e', got {log_base!r}")


def transport_constant(rc: RegularityConstants, m2_u: float, m2_v: float) -> float:
    """sqrt(c1 (sqrt E||u||^2 + sqrt E||v||^2) + 2 c2)."""
    return math.sqrt(rc.c1 * (math.sqrt(m2_u) + math.sqrt(m2_v)) + 2.0 * rc.c2)


def lemma3_bound(mu, nu, rc: RegularityConstants) -> tuple[float, float]:
    """Exact L1 distance and its W2 upper bound for a supported pair."""
    if isinstance(mu, GaussianMeasure) and isinstance(nu, GaussianMeasure):
        if mu.dim != 1:
            raise BoundError("exact L1 is only available for 1-D Gaussians")
        l1 = l1_distance(mu, nu)
        w2 = w2_gaussian(mu, nu)
    elif isinstance(mu, HistogramMeasure) and isinstance(nu, HistogramMeasure):
        l1 = l1_distance(mu, nu)
        pa = EmpiricalMeasure(mu.support, mu.probs)
        pb = EmpiricalMeasure(nu.support, nu.probs)
        w2 = math.sqrt(max(_histogram_w2sq(pa, pb), 0.0))
    else:
        raise BoundError(f"unsupported family pair {type(mu).__name__}/{type(nu).__name__}")
    bound = transport_constant(rc, second_moment(mu), second_moment(nu)) * math.sqrt(w2)
    return l1, bound


def _histogram_w2sq(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    if a.dim == 1:
        return _w2sq_1d(a.points[:, 0], a.weights, b.points[:, 0], b.weights)
    raise BoundError("histogram W2 is implemented for 1-D supports")


def _w2sq_1d(xa, wa, xb, wb) -> float:
    # quantile coupling
    ia, ib = np.argsort(xa), np.argsort(xb)
    xa, wa, xb, wb = xa[ia], wa[ia], xb[ib], wb[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    levels = np.unique(np.concatenate([[0.0], ca, cb]).clip(0, 1))
    total = 0.0
    for lo, hi in zip(levels[:-1], levels[1:]):
        mid = 0.5 * (lo + hi)
        qa = xa[min(np.searchsorted(ca, mid), len(xa) - 1)]
        qb = xb[min(np.searchsorted(cb, mid), len(xb) - 1)]
        total += (hi - lo) * (qa - qb) ** 2
    return float(total)


def kl_to_w2_check(mu: GaussianMeasure, nu: GaussianMeasure, rc: RegularityConstants) -> float:
    """Slack of KL(mu,nu) + KL(nu,mu) <= 2 (c1/2 (sqrt m2_mu + sqrt m2_nu) + c2) W2."""
    if not (isinstance(mu, GaussianMeasure) and isinstance(nu, GaussianMeasure)):
        raise BoundError("kl_to_w2_check needs Gaussian measures")
    lhs = kl_divergence(mu, nu) + kl_divergence(nu, mu)
    coeff = rc.c1 / 2 * (math.sqrt(second_moment(mu)) + math.sqrt(second_moment(nu))) + rc.c2
    return 2.0 * coeff * w2_gaussian(mu, nu) - lhs


def pinsker_slack(p, q) -> float:
    """2 KL(p, q) - ||p - q||_1^2."""
    return 2.0 * kl_divergence(p, q) - l1_distance(p, q) ** 2


def jensen_slack(w2: Sequence[float], lam: Sequence[float]) -> float:
    """[sum lam W2^2]^{1/4} - sum lam W2^{1/2}."""
    w2, lam = np.asarray(w2, float), np.asarray(lam, float)
    return float(np.sum(lam * w2**2) ** 0.25 - np.sum(lam * np.sqrt(w2)))


def quarter_power_slack(a: float, b: float) -> float:
    """a^{1/4} + b^{1/4} - (a + b)^{1/4}."""
    return a**0.25 + b**0.25 - (a + b) ** 0.25


def lemma1_rhs(risk_s: float, l1: float, sigma: float, L: float) -> float:
    return risk_s + L * l1 + sigma


def lemma2_rhs(risks, l1s, sigmas, lam, L: float) -> float:
    lam = np.asarray(lam, float)
    return float(lam @ np.asarray(risks) + L * lam @ np.asarray(l1s) + lam @ np.asarray(sigmas))


# ---------------------------------------------------------------------------
# risks


@dataclass(frozen=True)
class TruncatedLoss:
    """loss(a, b) = min(L, d(a, b)); ``d`` defaults to the discrete metric."""

    L: float = 1.0
    metric: Callable | None = None

    def __post_init__(self):
        if not self.L > 0:
            raise BoundError("L must be positive")

    def __call__(self, a, b) -> np.ndarray:
        a, b = np.asarray(a), np.asarray(b)
        if self.metric is None:
            d = (a != b).astype(np.float64)
        else:
            d = np.asarray(self.metric(a, b), dtype=np.float64)
        return np.minimum(self.L, d)


def _draw(mu, n_mc: int, seed) -> np.ndarray:
    if n_mc < 1:
        raise BoundError("n_mc must be >= 1")
    if isinstance(mu, GaussianMeasure):
        return sample(mu, n_mc, seed).points
    if isinstance(mu, EmpiricalMeasure):
        rng = np.random.default_rng(seed)
        idx = rng.choice(mu.n, size=n_mc, p=mu.weights)
        return mu.points[idx]
    if callable(mu):
        return np.asarray(mu(n_mc, np.random.default_rng(seed)), dtype=np.float64)
    raise BoundError(f"cannot sample from {type(mu).__name__}")


def _mc(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def risk(h, h_ref, mu, loss: TruncatedLoss | None = None, n_mc: int = DEFAULT_N_MC, seed=0):
    """Monte-Carlo estimate of E[loss(h(x), h_ref(x))] under ``mu``.

    Returns ``(value, stderr)``. ``mu`` may be a Gaussian, an empirical
    measure, or a sampler ``(n, rng) -> array``.
    """
    loss = loss or TruncatedLoss()
    x = _draw(mu, n_mc, seed)
    return _mc(loss(h(x), h_ref(x)))


def sigma_estimate(
    h_u, h_s, mu_u, mu_s, loss: TruncatedLoss | None = None, n_mc: int = DEFAULT_N_MC, seed=0
) -> SigmaEstimate:
    """min of the cross-domain disagreements of the two labeling functions.

    Ties within the combined Monte-Carlo error report ``side='seen'``.
    """
    loss = loss or TruncatedLoss()
    seeds = np.random.SeedSequence(_seed_entropy(seed)).spawn(2)
    vu, su = risk(h_u, h_s, mu_u, loss, n_mc, seeds[0])
    vs, ss = risk(h_u, h_s, mu_s, loss, n_mc, seeds[1])
    tie = abs(vu - vs) <= math.hypot(su, ss)
    if tie or vs <= vu:
        return SigmaEstimate(vs, "seen", ss, vu, vs)
    return SigmaEstimate(vu, "unseen", su, vu, vs)


def _seed_entropy(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return int(seed)


# ---------------------------------------------------------------------------
# theorem / corollary reports


@dataclass(frozen=True)
class AffineMap:
    """Representation map f(x) = A x + b; keeps Gaussians Gaussian."""

    A: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.zeros(A.shape[0]) if self.b is None else np.atleast_1d(np.asarray(self.b, float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def __call__(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self.A.T + self.b

    def pushforward(self, mu):
        if isinstance(mu, GaussianMeasure):
            return GaussianMeasure(self.A @ mu.mean + self.b, self.A @ mu.cov @ self.A.T)
        raise BoundError("pushforward requires a Gaussian input measure (no empirical fallback)")


def _pushforward(f, mu) -> GaussianMeasure:
    if isinstance(mu, GaussianMeasure) and isinstance(f, AffineMap):
        return f.pushforward(mu)
    raise BoundError(
        "bound reports need an affine representation and Gaussian inputs so pushforwards are exact"
    )


def _convex(lam, S: int) -> np.ndarray:
    lam = np.full(S, 1.0 / S) if lam is None else np.asarray(lam, dtype=np.float64)
    if lam.shape != (S,) or np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
        raise BoundError("lambda must be convex weights over the seen domains")
    return lam


def _theorem_pieces(seen, unseen, h, f, lam, L, n_mc, seed, log_base):
    loss = TruncatedLoss(L)
    mu_u, h_u = unseen
    S = len(seen)
    if S < 1:
        raise BoundError("need at least one seen domain")
    lam = _convex(lam, S)
    push_u = _pushforward(f, mu_u)
    push_s = [_pushforward(f, mu) for mu, _ in seen]
    rc = RegularityConstants.worst(
        *(regularity_constants_gaussian(p, log_base) for p in [push_u, *push_s])
    )
    m2_u = second_moment(push_u)
    C = max(transport_constant(rc, m2_u, second_moment(p)) for p in push_s)

    ss = np.random.SeedSequence(_seed_entropy(seed)).spawn(1 + 2 * S)
    lhs, lhs_se = risk(h, h_u, mu_u, loss, n_mc, ss[0])
    risks, risk_se, sigmas, sigma_se = [], [], [], []
    for i, (mu_s, h_s) in enumerate(seen):
        r, se = risk(h, h_s, mu_s, loss, n_mc, ss[1 + 2 * i])
        sig = sigma_estimate(h_u, h_s, mu_u, mu_s, loss, n_mc, ss[2 + 2 * i])
        risks.append(r)
        risk_se.append(se)
        sigmas.append(sig.value)
        sigma_se.append(sig.stderr)
    term_risks = float(lam @ risks)
    term_sigma = float(lam @ sigmas)
    mc_se = math.sqrt(lhs_se**2 + float(lam**2 @ np.square(risk_se)) + float(lam**2 @ np.square(sigma_se)))
    return dict(
        lam=lam, rc=rc, C=C, push_u=push_u, push_s=push_s, lhs=lhs, term_risks=term_risks,
        term_sigma=term_sigma, mc_se=mc_se, risks=risks, sigmas=sigmas,
    )


def theorem1_report(
    seen: Sequence[tuple],
    unseen: tuple,
    h,
    f: AffineMap,
    lam=None,
    L: float = 1.0,
    n_mc: int = DEFAULT_N_MC,
    seed=0,
    log_base: str = "2",
) -> BoundReport:
    """Evaluate every term of the seen-to-unseen risk bound.

    ``seen`` is a list of ``(input Gaussian, labeling function)`` pairs and
    ``unseen`` a single pair. ``f`` must be affine so the pushforwards are
    Gaussian; the regularity constants are the worst case over all of them.
    """
    p = _theorem_pieces(seen, unseen, h, f, lam, L, n_mc, seed, log_base)
    lam = p["lam"]
    w2sq = np.array([w2_gaussian(p["push_u"], ps) ** 2 for ps in p["push_s"]])
    transport = L * p["C"] * float(lam @ w2sq) ** 0.25
    rhs = p["term_risks"] + transport + p["term_sigma"]
    return BoundReport(
        lhs_risk=p["lhs"], term_risks=p["term_risks"], term_transport=transport,
        term_sigma=p["term_sigma"], rhs_total=rhs, slack=rhs - p["lhs"], L=L, C=p["C"],
        lam=lam.tolist(), rc=p["rc"], mc_stderr=p["mc_se"],
        details={"w2_squared": w2sq.tolist(), "risks": p["risks"], "sigmas": p["sigmas"]},
    )


def corollary1_report(
    seen: Sequence[tuple],
    unseen: tuple,
    h,
    f: AffineMap,
    reference: GaussianMeasure,
    lam=None,
    L: float = 1.0,
    n_mc: int = DEFAULT_N_MC,
    seed=0,
    log_base: str = "2",
) -> BoundReport:
    """Bound with the transport term split through a reference pushforward.

    ``reference`` lives in representation space. The constant C is the one
    of the theorem; ``theorem_transport`` is reported alongside so the
    split can be checked to dominate it.
    """
    if not isinstance(reference, GaussianMeasure):
        raise BoundError("reference must be a Gaussian pushforward")
    p = _theorem_pieces(seen, unseen, h, f, lam, L, n_mc, seed, log_base)
    lam, C = p["lam"], p["C"]
    w2sq_u = np.array([w2_gaussian(p["push_u"], ps) ** 2 for ps in p["push_s"]])
    w2sq_ref = np.array([w2_gaussian(reference, ps) ** 2 for ps in p["push_s"]])
    w2sq_ru = w2_gaussian(p["push_u"], reference) ** 2
    seen_ref = L * C * float(lam @ w2sq_ref) ** 0.25
    ref_unseen = L * C * w2sq_ru**0.25
    theorem_transport = L * C * float(lam @ w2sq_u) ** 0.25
    rhs = p["term_risks"] + seen_ref + ref_unseen + p["term_sigma"]
    return BoundReport(
        lhs_risk=p["lhs"], term_risks=p["term_risks"], term_transport=seen_ref + ref_unseen,
        term_sigma=p["term_sigma"], rhs_total=rhs, slack=rhs - p["lhs"], L=L, C=C,
        lam=lam.tolist(), rc=p["rc"], mc_stderr=p["mc_se"],
        term_transport_seen_ref=seen_ref, term_transport_ref_unseen=ref_unseen,
        theorem_transport=theorem_transport,
        details={"w2_squared_ref": w2sq_ref.tolist(), "w2_squared_ref_unseen": w2sq_ru},
    )


def degenerate_report(n_mc: int = 2000, seed=0) -> BoundReport:
    """Unseen domain identical to the single seen one, every hypothesis equal.

    All terms and the slack must come out exactly zero.
    """
    g = GaussianMeasure([0.0], [[1.0]])
    h = _threshold(1.0, 0.0)
    return theorem1_report([(g, h)], (g, h), h, AffineMap([[1.0]]), n_mc=n_mc, seed=seed)


# ---------------------------------------------------------------------------
# near invertibility and regimes


def near_invertibility_slack(f, reconstructor, samples, K: float, Q: float) -> tuple[float, float]:
    """Worst reconstruction error ``delta`` and the extra bound term ``2 Q K delta``."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.shape[0] == 0:
        raise BoundError("need at least one sample")
    rec = np.atleast_2d(reconstructor(f(x)))
    delta = float(np.max(np.linalg.norm(x - rec, axis=1)))
    return delta, 2.0 * Q * K * delta


@dataclass(frozen=True)
class RegimeRecord:
    w1: float
    w2: float
    sqrt_w2: float
    quarter_bound: float
    diameter: float
    sufficient_condition_holds: bool
    tighter: str  # "sqrt_w2" when sqrt(W2) < W1, else "w1"

    @property
    def sufficient_condition_respected(self) -> bool:
        """Diam <= W1^3 must imply sqrt(W2) <= W1."""
        return (not self.sufficient_condition_holds) or self.sqrt_w2 <= self.w1 * (1 + 1e-12)


def regime_compare(mu, nu, f_range_diameter: float | None = None) -> RegimeRecord:
    """W1 versus sqrt(W2) on two uniform clouds of equal size.

    ``f_range_diameter`` defaults to the diameter of the union of both
    clouds, which is the smallest value for which the quarter-power bound
    is guaranteed.
    """
    mu, nu = ot._as_measure(mu), ot._as_measure(nu)
    w1 = ot.exact_ot(mu, nu, power=1)
    w2 = math.sqrt(max(ot.exact_ot(mu, nu, power=2), 0.0))
    if f_range_diameter is None:
        pts = np.vstack([mu.points, nu.points])
        f_range_diameter = float(np.sqrt(ot.squared_distances(pts, pts).max()))
    sqrt_w2 = math.sqrt(w2)
    return RegimeRecord(
        w1=w1,
        w2=w2,
        sqrt_w2=sqrt_w2,
        quarter_bound=(f_range_diameter * w1) ** 0.25,
        diameter=f_range_diameter,
        sufficient_condition_holds=f_range_diameter <= w1**3,
        tighter="sqrt_w2" if sqrt_w2 < w1 else "w1",
    )


# ---------------------------------------------------------------------------
# randomized sweeps


@dataclass
class SweepResult:
    name: str
    cases: int
    min_slack: float
    violations: int
    exact: bool  # exact-family check (tolerance 1e-9) or Monte-Carlo (3 stderr)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0


EXACT_TOL = 1e-9
MC_SIGMAS = 3.0


def _rand_gauss_1d(rng, mean_scale=2.0):
    return GaussianMeasure([rng.uniform(-mean_scale, mean_scale)], [[rng.uniform(0.25, 4.0)]])


def _threshold(sign: float, cut: float):
    def h(x):
        return (sign * (np.atleast_2d(x)[:, 0] - cut) > 0).astype(np.int64)

    return h


def sweep_pinsker(cases, rng) -> SweepResult:
    slacks = []
    for _ in range(cases):
        k = int(rng.integers(2, 9))
        p = HistogramMeasure.on_grid(rng.dirichlet(np.ones(k)))
        q = HistogramMeasure.on_grid(rng.dirichlet(np.ones(k)))
        slacks.append(pinsker_slack(p, q))
    return _exact("pinsker", slacks)


def sweep_lemma3(cases, rng, log_base="2") -> SweepResult:
    slacks = []
    for _ in range(cases):
        mu, nu = _rand_gauss_1d(rng), _rand_gauss_1d(rng)
        rc = RegularityConstants.worst(
            regularity_constants_gaussian(mu, log_base), regularity_constants_gaussian(nu, log_base)
        )
        l1, bound = lemma3_bound(mu, nu, rc)
        slacks.append(bound - l1)
    return _exact("lemma3", slacks)


def sweep_kl_w2(cases, rng, log_base="2") -> SweepResult:
    slacks = []
    for _ in range(cases):
        mu, nu = _rand_gauss_1d(rng), _rand_gauss_1d(rng)
        rc = RegularityConstants.worst(
            regularity_constants_gaussian(mu, log_base), regularity_constants_gaussian(nu, log_base)
        )
        slacks.append(kl_to_w2_check(mu, nu, rc))
    return _exact("kl_to_w2", slacks)


def sweep_jensen(cases, rng) -> SweepResult:
    slacks = []
    for _ in range(cases):
        S = int(rng.integers(1, 6))
        slacks.append(jensen_slack(rng.exponential(2.0, S), rng.dirichlet(np.ones(S))))
    return _exact("jensen", slacks)


def sweep_quarter_power(cases, rng) -> SweepResult:
    vals = rng.exponential(3.0, size=(cases, 2))
    return _exact("quarter_power", [quarter_power_slack(a, b) for a, b in vals])


def sweep_lemma2_identity(cases, rng) -> SweepResult:
    gaps = []
    for _ in range(cases):
        S = int(rng.integers(1, 6))
        risks, l1s, sig = rng.uniform(0, 1, S), rng.uniform(0, 2, S), rng.uniform(0, 1, S)
        lam, L = rng.dirichlet(np.ones(S)), rng.uniform(0.5, 2)
        mix = sum(l * lemma1_rhs(r, d, s, L) for l, r, d, s in zip(lam, risks, l1s, sig))
        gaps.append(-abs(mix - lemma2_rhs(risks, l1s, sig, lam, L)))
    res = _exact("lemma2_identity", gaps)
    res.violations = sum(g < -1e-12 for g in gaps)
    return res


def _random_theory_case(rng, S):
    seen = []
    for _ in range(S):
        seen.append((_rand_gauss_1d(rng), _threshold(rng.choice([-1.0, 1.0]), rng.normal(0, 0.5))))
    unseen = (_rand_gauss_1d(rng), _threshold(rng.choice([-1.0, 1.0]), rng.normal(0, 0.5)))
    h = _threshold(rng.choice([-1.0, 1.0]), rng.normal(0, 0.5))
    scale = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
    f = AffineMap([[scale]], [rng.uniform(-1, 1)])
    return seen, unseen, h, f, rng.dirichlet(np.ones(S))


def sweep_theorem1(cases, rng, n_mc=DEFAULT_N_MC, log_base="2") -> SweepResult:
    slacks, margins = [], []
    for _ in range(cases):
        seen, unseen, h, f, lam = _random_theory_case(rng, int(rng.integers(1, 4)))
        rep = theorem1_report(seen, unseen, h, f, lam, 1.0, n_mc, rng.integers(2**32), log_base)
        slacks.append(rep.slack)
        margins.append(rep.slack + MC_SIGMAS * rep.mc_stderr)
    return _mc_result("theorem1", slacks, margins)


def sweep_corollary1(cases, rng, n_mc=DEFAULT_N_MC, log_base="2") -> SweepResult:
    slacks, margins, dominated = [], [], 0
    for _ in range(cases):
        seen, unseen, h, f, lam = _random_theory_case(rng, int(rng.integers(1, 4)))
        ref = _rand_gauss_1d(rng)
        seed = rng.integers(2**32)
        cor = corollary1_report(seen, unseen, h, f, ref, lam, 1.0, n_mc, seed, log_base)
        slacks.append(cor.slack)
        margins.append(cor.slack + MC_SIGMAS * cor.mc_stderr)
        # the split transport term dominates the theorem's (same MC draws)
        if cor.term_transport < cor.theorem_transport - EXACT_TOL:
            dominated += 1
    res = _mc_result("corollary1", slacks, margins)
    res.violations += dominated
    res.extra["transport_chain_violations"] = dominated
    return res


def sweep_regimes(cases, rng) -> SweepResult:
    """Random clouds plus scaled far-apart translations.

    Checks W1 <= W2, sqrt(W2) <= (Diam W1)^{1/4}, and that Diam <= W1^3
    forces sqrt(W2) <= W1; also records whether each ordering occurred.
    """
    violations, slacks = 0, []
    orderings = {"sqrt_w2": 0, "w1": 0}
    suff = 0
    for i in range(cases):
        n = int(rng.integers(2, 6))
        d = int(rng.integers(1, 3))
        x = rng.uniform(0, 1, (n, d))
        if i % 2:
            t = rng.normal(size=d)
            t *= rng.uniform(2.0, 30.0) / np.linalg.norm(t)
            y = x + t + 0.05 * rng.normal(size=(n, d))
        else:
            y = rng.uniform(0, 1, (n, d))
        r = regime_compare(x, y)
        orderings[r.tighter] += 1
        suff += r.sufficient_condition_holds
        s1 = r.w2 - r.w1
        s2 = r.quarter_bound - r.sqrt_w2
        slacks.append(min(s1, s2))
        bad = s1 < -EXACT_TOL * max(1, r.w2) or s2 < -EXACT_TOL * max(1, r.quarter_bound)
        violations += bad or not r.sufficient_condition_respected
    return SweepResult("regimes", cases, float(min(slacks)), int(violations), True,
                       {"orderings": orderings, "sufficient_condition_cases": int(suff)})


def _exact(name, slacks) -> SweepResult:
    slacks = np.asarray(slacks, dtype=np.float64)
    return SweepResult(name, slacks.size, float(slacks.min()), int(np.sum(slacks < -EXACT_TOL)), True)


def _mc_result(name, slacks, margins) -> SweepResult:
    return SweepResult(name, len(slacks), float(min(slacks)), int(sum(m < 0 for m in margins)), False,
                       {"min_slack_plus_3se": float(min(margins))})


SWEEPS = {
    "pinsker": sweep_pinsker,
    "lemma3": sweep_lemma3,
    "kl_to_w2": sweep_kl_w2,
    "jensen": sweep_jensen,
    "quarter_power": sweep_quarter_power,
    "lemma2_identity": sweep_lemma2_identity,
    "theorem1": sweep_theorem1,
    "corollary1": sweep_corollary1,
    "regimes": sweep_regimes,
}
MC_SWEEPS = ("theorem1", "corollary1")


def run_sweeps(cases: int = 100, seed: int = 0, n_mc: int = DEFAULT_N_MC, log_base: str = "2",
               checks=None) -> list[SweepResult]:
    """Run the named inequality sweeps (all by default), each with its own stream."""
    names = list(SWEEPS) if checks is None else list(checks)
    unknown = set(names) - set(SWEEPS)
    if unknown:
        raise BoundError(f"unknown checks {sorted(unknown)}")
    streams = np.random.SeedSequence(seed).spawn(len(SWEEPS))
    out = []
    for name, ss in zip(SWEEPS, streams):
        if name not in names:
            continue
        rng = np.random.default_rng(ss)
        fn = SWEEPS[name]
        if name in MC_SWEEPS:
            out.append(fn(cases, rng, n_mc, log_base))
        elif name in ("lemma3", "kl_to_w2"):
            out.append(fn(cases, rng, log_base))
        else:
            out.append(fn(cases, rng))
    return out


__all__ = [
    "AffineMap",
    "SWEEPS",
    "SweepResult",
    "run_sweeps",
    "BoundError",
    "BoundReport",
    "MeasureError",
    "RegimeRecord",
    "RegularityConstants",
    "SigmaEstimate",
    "TruncatedLoss",
    "corollary1_report",
    "degenerate_report",
    "jensen_slack",
    "kl_to_w2_check",
    "lemma1_rhs",
    "lemma2_rhs",
    "lemma3_bound",
    "near_invertibility_slack",
    "pinsker_slack",
    "quarter_power_slack",
    "regime_compare",
    "regularity_constants_gaussian",
    "risk",
    "sigma_estimate",
    "theorem1_report",
    "transport_constant",
]
