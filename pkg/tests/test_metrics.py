"""Metric tests against brute-force sweep oracles.

The oracles below recount misclassifications with plain Python loops over
every candidate threshold, independently of the vectorized code.
"""

import numpy as np
import pytest

from ocpad.errors import MetricError
from ocpad.metrics import (
    MetricsReport,
    ScoredSet,
    build_report,
    candidate_thresholds,
    compute_rates,
    det_points,
    eer,
    select_threshold,
)


def oracle_candidates(scores):
    u = sorted(set(float(s) for s in scores))
    mids = [(a + b) / 2.0 for a, b in zip(u[:-1], u[1:])]
    return [u[0] - 1.0] + mids + [u[-1] + 1.0]


def oracle_rates(scores, labels, tau):
    attacks = [s for s, y in zip(scores, labels) if y == 0]
    bona = [s for s, y in zip(scores, labels) if y == 1]
    apcer = sum(1 for s in attacks if s >= tau) / len(attacks)
    bpcer = sum(1 for s in bona if s < tau) / len(bona)
    return apcer, bpcer, (apcer + bpcer) / 2.0


def oracle_select_threshold(scores, labels, target):
    bona = [s for s, y in zip(scores, labels) if y == 1]
    best = None
    for t in oracle_candidates(scores):
        bpcer = sum(1 for s in bona if s < t) / len(bona)
        if bpcer <= target:
            best = t
    return best


def oracle_eer(scores, labels):
    best = None
    for t in oracle_candidates(scores):
        apcer, bpcer, _ = oracle_rates(scores, labels, t)
        key = (abs(apcer - bpcer), apcer + bpcer)
        if best is None or key < best[0]:
            best = (key, (apcer + bpcer) / 2.0, t)
    return best[1], best[2]


def random_set(rng, n):
    labels = rng.integers(0, 2, size=n)
    while labels.min() == labels.max():
        labels = rng.integers(0, 2, size=n)
    # Mix of continuous scores and deliberate ties.
    scores = np.round(rng.normal(size=n) + labels * rng.uniform(0, 2), 2)
    return scores, labels


class TestComputeRates:
    def test_perfect_separation(self):
        s = ScoredSet(np.array([0.0, 0.0, 1.0, 1.0]), np.array([0, 0, 1, 1]))
        assert compute_rates(s, 0.5) == (0.0, 0.0, 0.0)

    def test_total_inversion(self):
        s = ScoredSet(np.array([0.0, 0.0, 1.0, 1.0]), np.array([1, 1, 0, 0]))
        assert compute_rates(s, 0.5) == (1.0, 1.0, 1.0)

    def test_counting(self):
        scores = np.array([0.0, 0.0, 1.0, 1.0, 1.0, 1.0])
        labels = np.array([0, 0, 0, 0, 1, 1])
        apcer, bpcer, acer = compute_rates(ScoredSet(scores, labels), 0.5)
        assert (apcer, bpcer, acer) == (0.5, 0.0, 0.25)

    def test_missing_class_named(self):
        with pytest.raises(MetricError, match="bonafide"):
            compute_rates(ScoredSet(np.array([0.1]), np.array([0])), 0.5)
        with pytest.raises(MetricError, match="attack"):
            compute_rates(ScoredSet(np.array([0.1]), np.array([1])), 0.5)

    def test_acer_exact_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            scores, labels = random_set(rng, 40)
            s = ScoredSet(scores, labels)
            tau = float(rng.normal())
            apcer, bpcer, acer = compute_rates(s, tau)
            assert acer == (apcer + bpcer) / 2.0


class TestSelectThreshold:
    def test_at_most_one_percent_below(self):
        rng = np.random.default_rng(1)
        bona = rng.normal(size=100) + 3
        attacks = rng.normal(size=50)
        scores = np.concatenate([bona, attacks])
        labels = np.concatenate([np.ones(100, int), np.zeros(50, int)])
        tau = select_threshold(ScoredSet(scores, labels), 0.01)
        assert np.count_nonzero(bona < tau) <= 1

    def test_perfectly_separated_dev(self):
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        labels = np.array([0, 0, 1, 1])
        tau = select_threshold(ScoredSet(scores, labels), 0.01)
        assert 0.2 < tau < 0.8
        _, bpcer, _ = compute_rates(ScoredSet(scores, labels), tau)
        assert bpcer == 0.0

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            scores, labels = random_set(rng, int(rng.integers(10, 500)))
            target = float(rng.uniform(0.005, 0.3))
            got = select_threshold(ScoredSet(scores, labels), target)
            want = oracle_select_threshold(scores, labels, target)
            assert abs(got - want) <= 1e-12

    def test_no_bonafide_rejected(self):
        with pytest.raises(MetricError):
            select_threshold(ScoredSet(np.array([0.5, 0.2]), np.array([0, 0])), 0.01)

    def test_bad_target_rejected(self):
        s = ScoredSet(np.array([0.5, 0.2]), np.array([1, 0]))
        with pytest.raises(MetricError):
            select_threshold(s, 0.0)


class TestEer:
    def test_perfect_separation_is_zero(self):
        s = ScoredSet(np.array([0.0, 0.1, 0.8, 0.9]), np.array([0, 0, 1, 1]))
        value, _ = eer(s)
        assert value == 0.0

    def test_constant_scores_give_half(self):
        s = ScoredSet(np.full(10, 3.3), np.array([0, 1] * 5))
        value, _ = eer(s)
        assert value == 0.5

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            scores, labels = random_set(rng, int(rng.integers(5, 200)))
            got_value, got_tau = eer(ScoredSet(scores, labels))
            want_value, want_tau = oracle_eer(scores, labels)
            assert abs(got_value - want_value) <= 1e-12
            assert abs(got_tau - want_tau) <= 1e-12

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(4)
        scores, labels = random_set(rng, 80)
        base, _ = eer(ScoredSet(scores, labels))
        warped, _ = eer(ScoredSet(np.exp(scores * 0.3), labels))
        assert warped == pytest.approx(base, abs=1e-12)


class TestDetPoints:
    def test_two_scores_three_points_including_origin(self):
        s = ScoredSet(np.array([0.2, 0.8]), np.array([0, 1]))
        pts = det_points(s)
        assert len(pts) == 3
        assert any(a == 0.0 and b == 0.0 for _, a, b in pts)

    def test_monotone_along_thresholds(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            scores, labels = random_set(rng, 60)
            pts = det_points(ScoredSet(scores, labels))
            apcers = [a for _, a, _ in pts]
            bpcers = [b for _, _, b in pts]
            assert all(x >= y for x, y in zip(apcers[:-1], apcers[1:]))
            assert all(x <= y for x, y in zip(bpcers[:-1], bpcers[1:]))

    def test_perfect_separation_contains_origin(self):
        s = ScoredSet(np.array([0.0, 0.1, 5.0, 6.0]), np.array([0, 0, 1, 1]))
        assert any(a == 0.0 and b == 0.0 for _, a, b in det_points(s))

    def test_rates_match_compute_rates(self):
        rng = np.random.default_rng(6)
        scores, labels = random_set(rng, 30)
        s = ScoredSet(scores, labels)
        for tau, apcer, bpcer in det_points(s):
            a, b, _ = compute_rates(s, tau)
            assert (a, b) == (apcer, bpcer)


class TestScoredSet:
    def test_empty_rejected(self):
        with pytest.raises(MetricError):
            ScoredSet(np.array([]), np.array([]))

    def test_non_finite_rejected(self):
        with pytest.raises(MetricError):
            ScoredSet(np.array([np.nan, 1.0]), np.array([0, 1]))

    def test_bad_labels_rejected(self):
        with pytest.raises(MetricError):
            ScoredSet(np.array([0.5, 0.2]), np.array([2, 1]))


class TestRatesMonotone:
    def test_apcer_down_bpcer_up_in_tau(self):
        rng = np.random.default_rng(7)
        scores, labels = random_set(rng, 100)
        s = ScoredSet(scores, labels)
        taus = np.sort(rng.normal(size=20))
        rates = [compute_rates(s, t) for t in taus]
        apcers = [r[0] for r in rates]
        bpcers = [r[1] for r in rates]
        assert all(x >= y for x, y in zip(apcers[:-1], apcers[1:]))
        assert all(x <= y for x, y in zip(bpcers[:-1], bpcers[1:]))


class TestBuildReport:
    def test_fields_consistent(self):
        rng = np.random.default_rng(8)
        dev_scores, dev_labels = random_set(rng, 120)
        ev_scores, ev_labels = random_set(rng, 120)
        report = build_report(ScoredSet(dev_scores, dev_labels),
                              ScoredSet(ev_scores, ev_labels), 0.05)
        assert isinstance(report, MetricsReport)
        assert report.dev_acer == (report.dev_apcer + report.dev_bpcer) / 2.0
        assert report.eval_acer == (report.eval_apcer + report.eval_bpcer) / 2.0
        for t, a, b in report.det_points:
            assert 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0
        doc = report.to_dict()
        assert doc["dev"]["acer"] == report.dev_acer
        assert doc["eval"]["acer"] == report.eval_acer
