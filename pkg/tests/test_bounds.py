import math

import numpy as np
import pytest

from otdg import bounds as bd
from otdg.measures import EmpiricalMeasure, GaussianMeasure, HistogramMeasure, w2_gaussian

LN2 = math.log(2)


def g1(m, v=1.0):
    return GaussianMeasure([m], [[v]])


def threshold(cut=0.0, sign=1.0):
    return lambda x: (sign * (np.atleast_2d(x)[:, 0] - cut) > 0).astype(int)


class TestRegularity:
    @pytest.mark.parametrize(
        "g, c1, c2",
        [(g1(0), 1.4427, 0.0), (g1(2), 1.4427, 2.8854), (g1(0, 4.0), 0.3607, 0.0)],
    )
    def test_gaussian_examples(self, g, c1, c2):
        rc = bd.regularity_constants_gaussian(g)
        assert rc.c1 == pytest.approx(c1, abs=1e-4)
        assert rc.c2 == pytest.approx(c2, abs=1e-4)

    def test_natural_log_rescales(self):
        g = GaussianMeasure([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]])
        r2 = bd.regularity_constants_gaussian(g, "2")
        re = bd.regularity_constants_gaussian(g, "e")
        assert r2.c1 * LN2 == pytest.approx(re.c1)
        assert r2.c2 * LN2 == pytest.approx(re.c2)

    def test_constants_bound_the_gradient(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(3, 3))
        g = GaussianMeasure(rng.normal(size=3), A @ A.T + 0.3 * np.eye(3))
        rc = bd.regularity_constants_gaussian(g, "e")
        prec = np.linalg.inv(g.cov)
        for x in rng.normal(scale=5, size=(200, 3)):
            grad = -prec @ (x - g.mean)
            assert np.linalg.norm(grad) <= rc.c1 * np.linalg.norm(x) + rc.c2 + 1e-9

    def test_rejects_bad_inputs(self):
        with pytest.raises(bd.BoundError):
            bd.regularity_constants_gaussian(HistogramMeasure.on_grid([1.0]))
        with pytest.raises(bd.BoundError):
            bd.regularity_constants_gaussian(g1(0), log_base="10")
        with pytest.raises(bd.BoundError):
            bd.RegularityConstants(-1.0, 0.0)


class TestLemma3:
    def test_identical(self):
        rc = bd.regularity_constants_gaussian(g1(0))
        l1, bound = bd.lemma3_bound(g1(0), g1(0), rc)
        assert l1 == 0.0 and bound == pytest.approx(0.0, abs=1e-12)

    def test_shift_example(self):
        rc = bd.RegularityConstants(1 / LN2, 0.0)
        l1, bound = bd.lemma3_bound(g1(0), g1(0.5), rc)
        expected = math.sqrt(rc.c1 * (1 + math.sqrt(1.25))) * math.sqrt(0.5)
        assert l1 == pytest.approx(0.3948, abs=1e-4)
        assert bound == pytest.approx(expected)
        assert bound == pytest.approx(1.236, abs=1e-3)

    def test_histograms(self):
        p = HistogramMeasure.on_grid([0.5, 0.5])
        q = HistogramMeasure.on_grid([0.25, 0.75])
        l1, bound = bd.lemma3_bound(p, q, bd.RegularityConstants(1.0, 1.0))
        # quantile coupling moves 1/4 mass by one step, so W2 = 1/2
        m2p, m2q = 0.5, 0.75
        expected = math.sqrt(math.sqrt(m2p) + math.sqrt(m2q) + 2) * math.sqrt(0.5)
        assert l1 == pytest.approx(0.5)
        assert bound == pytest.approx(expected)

    def test_unsupported_pair(self):
        with pytest.raises(bd.BoundError):
            bd.lemma3_bound(g1(0), HistogramMeasure.on_grid([1.0]), bd.RegularityConstants(1, 0))

    def test_random_pairs(self):
        res = bd.sweep_lemma3(100, np.random.default_rng(1))
        assert res.passed and res.min_slack >= -1e-9


class TestKLToW2:
    def test_identical(self):
        rc = bd.regularity_constants_gaussian(g1(0))
        assert bd.kl_to_w2_check(g1(0), g1(0), rc) == pytest.approx(0.0, abs=1e-12)

    def test_shift_example(self):
        rc = bd.RegularityConstants(1.4427, 0.0)
        slack = bd.kl_to_w2_check(g1(0), g1(0.5), rc)
        rhs = 2 * (1.4427 / 2 * (1 + math.sqrt(1.25))) * 0.5
        assert slack == pytest.approx(rhs - 0.25)
        assert slack == pytest.approx(1.278, abs=1e-3)

    def test_sweep(self):
        assert bd.sweep_kl_w2(100, np.random.default_rng(2)).passed


class TestElementary:
    def test_pinsker(self):
        p = HistogramMeasure.on_grid([0.5, 0.5])
        q = HistogramMeasure.on_grid([0.25, 0.75])
        assert bd.pinsker_slack(p, q) == pytest.approx(2 * 0.1438410362 - 0.25)

    def test_jensen_equal_values_tight(self):
        assert bd.jensen_slack([2.0, 2.0, 2.0], [0.2, 0.3, 0.5]) == pytest.approx(0.0, abs=1e-12)

    def test_quarter_power(self):
        assert bd.quarter_power_slack(0.0, 5.0) == pytest.approx(0.0)
        assert bd.quarter_power_slack(1.0, 1.0) == pytest.approx(2 - 2**0.25)

    def test_lemma2_identity(self):
        assert bd.sweep_lemma2_identity(100, np.random.default_rng(3)).passed

    @pytest.mark.parametrize("name", ["pinsker", "jensen", "quarter_power"])
    def test_sweeps(self, name):
        assert bd.SWEEPS[name](100, np.random.default_rng(4)).passed


class TestRisk:
    def test_same_hypothesis(self):
        h = threshold()
        assert bd.risk(h, h, g1(0), n_mc=1000)[0] == 0.0

    def test_constant_disagreement(self):
        r, se = bd.risk(lambda x: np.zeros(len(x)), lambda x: np.ones(len(x)), g1(0), n_mc=1000)
        assert r == 1.0 and se == 0.0

    def test_half_mass(self):
        def mixture(n, rng):
            return (rng.choice([-2.0, 2.0], n) + rng.normal(size=n))[:, None]

        # disagree exactly on x > 0, which carries half the mass
        r, se = bd.risk(lambda x: np.zeros(len(x), int), threshold(), mixture, n_mc=100_000, seed=1)
        assert abs(r - 0.5) <= 3 * se

    def test_truncated_metric(self):
        loss = bd.TruncatedLoss(L=2.0, metric=lambda a, b: np.abs(a - b))
        np.testing.assert_allclose(loss(np.array([0.0, 0.0]), np.array([1.5, 9.0])), [1.5, 2.0])

    def test_bad_inputs(self):
        with pytest.raises(bd.BoundError):
            bd.risk(threshold(), threshold(), g1(0), n_mc=0)
        with pytest.raises(bd.BoundError):
            bd.TruncatedLoss(L=0)


class TestSigma:
    def setup_method(self):
        pts = np.arange(10.0)[:, None]
        self.mu_u = EmpiricalMeasure(pts)
        w = np.full(10, 0.9 / 7)
        w[:3] = [0.1, 0.0, 0.0]
        self.mu_s = EmpiricalMeasure(pts, w)
        # h_u and h_s disagree on {x < 3}: mass 0.3 under mu_u, 0.1 under mu_s
        self.h_u = lambda x: (x[:, 0] < 3).astype(int)
        self.h_s = lambda x: np.zeros(len(x), int)

    def test_region_masses(self):
        sig = bd.sigma_estimate(self.h_u, self.h_s, self.mu_u, self.mu_s, seed=0)
        assert sig.side == "seen"
        assert abs(sig.value - 0.1) <= 3 * sig.stderr
        assert abs(sig.unseen_value - 0.3) <= 0.01

    def test_equal_hypotheses(self):
        sig = bd.sigma_estimate(self.h_u, self.h_u, self.mu_u, self.mu_s, n_mc=1000)
        assert sig.value == 0.0

    def test_tie_goes_to_seen(self):
        sig = bd.sigma_estimate(self.h_u, self.h_s, self.mu_u, self.mu_u, seed=3)
        assert sig.side == "seen"

    def test_value_in_range(self):
        sig = bd.sigma_estimate(self.h_s, self.h_u, self.mu_s, self.mu_u, seed=5)
        assert 0.0 <= sig.value <= 1.0


IDENTITY = bd.AffineMap([[1.0]])


class TestTheorem1:
    def test_identical_domains(self):
        h = threshold()
        rep = bd.theorem1_report([(g1(0), h)], (g1(0), h), h, IDENTITY, n_mc=2000)
        assert rep.lhs_risk == 0.0 and rep.term_risks == 0.0 and rep.term_sigma == 0.0
        assert rep.term_transport == pytest.approx(0.0, abs=1e-9)
        assert rep.slack == pytest.approx(0.0, abs=1e-9)

    def test_shift_pipeline(self):
        seen = [(g1(0), threshold(0.0))]
        unseen = (g1(0.5), threshold(0.25))
        rep = bd.theorem1_report(seen, unseen, threshold(0.1), IDENTITY, L=1.0, seed=2)
        assert rep.slack >= -3 * rep.mc_stderr
        rc = bd.regularity_constants_gaussian(g1(0.5))
        assert rep.rc == rc
        assert rep.C == pytest.approx(bd.transport_constant(rc, 1.25, 1.0))
        assert rep.term_transport == pytest.approx(rep.C * 0.5**0.5)
        assert rep.rhs_total == pytest.approx(rep.term_risks + rep.term_transport + rep.term_sigma)

    def test_requires_analytic_family(self):
        h = threshold()
        emp = EmpiricalMeasure([[0.0], [1.0]])
        with pytest.raises(bd.BoundError):
            bd.theorem1_report([(emp, h)], (emp, h), h, IDENTITY)
        with pytest.raises(bd.BoundError):
            bd.theorem1_report([(g1(0), h)], (g1(0), h), h, lambda x: x)

    def test_lambda_validation(self):
        h = threshold()
        with pytest.raises(bd.BoundError):
            bd.theorem1_report([(g1(0), h)], (g1(0), h), h, IDENTITY, lam=[0.4])

    def test_sweep(self):
        res = bd.sweep_theorem1(50, np.random.default_rng(6), n_mc=20_000)
        assert res.passed


class TestCorollary1:
    def setup_method(self):
        self.seen = [(g1(0), threshold(0.0)), (g1(2), threshold(1.0))]
        self.unseen = (g1(3), threshold(1.5))
        self.h = threshold(0.8)

    def test_reference_at_unseen_reduces(self):
        cor = bd.corollary1_report(self.seen, self.unseen, self.h, IDENTITY, g1(3), seed=1)
        thm = bd.theorem1_report(self.seen, self.unseen, self.h, IDENTITY, seed=1)
        assert cor.term_transport_ref_unseen == pytest.approx(0.0, abs=1e-9)
        assert cor.term_transport == pytest.approx(thm.term_transport)
        assert cor.slack == pytest.approx(thm.slack)

    def test_barycenter_reference_is_best(self):
        # the W2 barycenter of N(0,1) and N(2,1) is N(1,1)
        terms = {}
        for m in np.linspace(-1, 3, 9):
            cor = bd.corollary1_report(self.seen, self.unseen, self.h, IDENTITY, g1(m), n_mc=1000)
            terms[m] = cor.term_transport_seen_ref
        assert min(terms, key=terms.get) == pytest.approx(1.0)

    def test_split_dominates_theorem(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            ref = g1(rng.uniform(-3, 3), rng.uniform(0.25, 4))
            cor = bd.corollary1_report(self.seen, self.unseen, self.h, IDENTITY, ref, n_mc=1000)
            assert cor.term_transport >= cor.theorem_transport - 1e-9
            assert cor.slack >= -3 * cor.mc_stderr

    def test_sweep(self):
        res = bd.sweep_corollary1(50, np.random.default_rng(8), n_mc=20_000)
        assert res.passed
        assert res.extra["transport_chain_violations"] == 0


class TestNearInvertibility:
    def test_exact_inverse(self):
        f = bd.AffineMap([[2.0, 0.0], [0.0, 0.5]])
        inv = bd.AffineMap(np.linalg.inv(f.A))
        x = np.random.default_rng(0).normal(size=(50, 2))
        delta, extra = bd.near_invertibility_slack(f, inv, x, K=3.0, Q=2.0)
        assert delta == pytest.approx(0.0, abs=1e-12) and extra == pytest.approx(0.0, abs=1e-11)

    def test_constant_offset(self):
        t = np.array([0.3, -0.4])
        x = np.random.default_rng(1).normal(size=(20, 2))
        delta, extra = bd.near_invertibility_slack(lambda z: z, lambda z: z + t, x, K=1.5, Q=2.0)
        assert delta == pytest.approx(0.5)
        assert extra == pytest.approx(2 * 2.0 * 1.5 * 0.5)

    def test_replayed_error(self):
        rng = np.random.default_rng(2)
        W = rng.normal(size=(3, 2))
        x = rng.normal(size=(30, 3))
        enc, dec = (lambda z: z @ W), (lambda z: z @ W.T)
        delta, _ = bd.near_invertibility_slack(enc, dec, x, K=1, Q=1)
        assert delta == pytest.approx(np.max(np.linalg.norm(x - x @ W @ W.T, axis=1)))

    def test_empty(self):
        with pytest.raises(bd.BoundError):
            bd.near_invertibility_slack(lambda z: z, lambda z: z, np.zeros((0, 2)), 1, 1)


class TestRegimes:
    def test_identical(self):
        x = np.random.default_rng(0).normal(size=(4, 2))
        r = bd.regime_compare(x, x)
        assert r.w1 == 0.0 and r.w2 == 0.0 and r.quarter_bound == 0.0

    def test_chain_on_random_clouds(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            x, y = rng.uniform(size=(5, 2)), rng.uniform(size=(5, 2))
            r = bd.regime_compare(x, y)
            assert r.w1 <= r.w2 + 1e-12
            assert r.sqrt_w2 <= r.quarter_bound + 1e-12

    def test_far_apart_pair(self):
        x = np.random.default_rng(2).uniform(size=(4, 2))
        r = bd.regime_compare(x, x + [50.0, 0.0])
        assert r.sufficient_condition_holds
        assert r.sqrt_w2 <= r.w1
        assert r.tighter == "sqrt_w2"

    def test_near_pair_favours_w1(self):
        x = np.random.default_rng(3).uniform(size=(4, 2))
        r = bd.regime_compare(x, x + [0.1, 0.0])
        assert r.tighter == "w1"

    def test_sweep_sees_both_orderings(self):
        res = bd.sweep_regimes(100, np.random.default_rng(4))
        assert res.passed
        assert res.extra["orderings"]["sqrt_w2"] > 0 and res.extra["orderings"]["w1"] > 0
        assert res.extra["sufficient_condition_cases"] > 0


def test_run_sweeps_subset_and_unknown():
    out = bd.run_sweeps(cases=10, checks=["pinsker", "jensen"])
    assert [r.name for r in out] == ["pinsker", "jensen"]
    with pytest.raises(bd.BoundError):
        bd.run_sweeps(checks=["nope"])


def test_run_sweeps_deterministic():
    a = bd.run_sweeps(cases=10, seed=3, n_mc=2000)
    b = bd.run_sweeps(cases=10, seed=3, n_mc=2000)
    assert [r.min_slack for r in a] == [r.min_slack for r in b]


def test_report_to_dict():
    h = threshold()
    rep = bd.theorem1_report([(g1(0), h)], (g1(1), h), h, IDENTITY, n_mc=500)
    d = rep.to_dict()
    assert d["rc"]["c1"] == pytest.approx(1 / LN2)
    assert set(d) >= {"lhs_risk", "term_risks", "term_transport", "term_sigma", "slack"}


def test_w2_used_for_transport_is_exact():
    assert w2_gaussian(g1(0), g1(0.5)) == pytest.approx(0.5)
