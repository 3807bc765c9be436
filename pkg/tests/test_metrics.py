import math

import numpy as np
import pytest

from gaborface import (
    TrialSet,
    cmc_curve,
    cmca,
    cum_at,
    evaluate,
    first_one,
    roc_and_eer,
)
from gaborface.errors import InvalidInputError, UnattainableTargetError
from gaborface.metrics import read_report_csv, write_report_csv


def eer_oracle(gen, imp):
    """Exhaustive threshold scan: plateau (FAR, FRR) pairs at every
    score and every midpoint, linear interpolation at the crossing."""
    gen, imp = list(gen), list(imp)
    scores = sorted(set(gen) | set(imp))
    cands = [scores[0] - 1.0]
    for a, b in zip(scores, scores[1:]):
        cands.extend([a, (a + b) / 2.0])
    cands.extend([scores[-1], scores[-1] + 1.0])
    pts = []
    for t in cands:
        far = 100.0 * sum(1 for s in imp if s <= t) / len(imp)
        frr = 100.0 * sum(1 for s in gen if s > t) / len(gen)
        pts.append((far, frr))
    for i, (far, frr) in enumerate(pts):
        if far >= frr:
            if far == frr or i == 0:
                return far
            f0, r0 = pts[i - 1]
            t = (r0 - f0) / ((far - f0) - (frr - r0))
            return f0 + t * (far - f0)
    raise AssertionError("no crossing found")


class TestCmcCurve:
    def test_all_rank_one(self):
        x, rate = cmc_curve([1] * 7, 5)
        assert np.allclose(rate, 100.0)
        assert np.allclose(x, [20, 40, 60, 80, 100])

    def test_uniform_ranks(self):
        x, rate = cmc_curve(list(range(1, 11)), 10)
        assert np.allclose(rate, 10.0 * np.arange(1, 11))

    def test_counting_oracle(self):
        rng = np.random.default_rng(81)
        g = 25
        ranks = rng.integers(1, g + 1, size=200)
        x, rate = cmc_curve(ranks, g)
        for k in range(1, g + 1):
            want = 100.0 * np.count_nonzero(ranks <= k) / ranks.size
            assert rate[k - 1] == pytest.approx(want, abs=1e-12)
        assert np.all(np.diff(rate) >= 0)
        assert rate[-1] == 100.0

    def test_rank_validation(self):
        with pytest.raises(InvalidInputError):
            cmc_curve([0, 1], 5)
        with pytest.raises(InvalidInputError):
            cmc_curve([6], 5)
        with pytest.raises(InvalidInputError):
            cmc_curve([], 5)


class TestFirstOne:
    def test_trivial(self):
        assert first_one([1, 1, 2, 1], 4) == 75.0

    def test_large_gallery_anchor(self):
        ranks = [1] * 1161 + [2] * 34
        assert first_one(ranks, 1195) == pytest.approx(97.15, abs=0.01)


class TestCumAt:
    def test_rank_one_everywhere(self):
        assert cum_at([1] * 9, 50, 100.0) == pytest.approx(2.0)

    def test_small_fraction_anchor(self):
        # 97.15% at rank 1, the rest at rank 2, gallery of 1196:
        # the 99% level is reached at 0.17% of the gallery
        ranks = [1] * 1161 + [2] * 34
        assert cum_at(ranks, 1196, 99.0) == pytest.approx(0.17, abs=0.005)
        assert cum_at(ranks, 1196, 97.0) == pytest.approx(100.0 / 1196)

    def test_unattainable_target(self):
        with pytest.raises(UnattainableTargetError):
            cum_at([1, 2], 4, 100.5)


class TestCmca:
    def test_perfect_curve_zero_area(self):
        x, rate = cmc_curve([1] * 10, 40)
        assert cmca(x, rate) == 0.0

    def test_flat_zero_curve(self):
        x = 100.0 * np.arange(1, 11) / 10
        assert cmca(x, np.zeros(10)) == 10000.0

    def test_riemann_oracle(self):
        rng = np.random.default_rng(82)
        ranks = rng.integers(1, 26, size=300)
        x, rate = cmc_curve(ranks, 25)
        got = cmca(x, rate)
        xs = np.linspace(0.0, 100.0, 200001)
        poly = np.interp(xs, np.concatenate(([0.0], x)),
                         np.concatenate(([rate[0]], rate)))
        want = np.trapezoid(100.0 - poly, xs) if hasattr(np, "trapezoid") \
            else np.trapz(100.0 - poly, xs)
        assert got == pytest.approx(want, abs=0.5)


class TestRocAndEer:
    def test_perfect_separation(self):
        curve, roca, eer = roc_and_eer([-0.9, -0.8, -0.7], [0.1, 0.2, 0.3])
        assert eer == 0.0
        assert roca == 0.0
        assert curve.far[0] == 0.0 and curve.frr[0] == 100.0
        assert curve.thresholds[0] == -np.inf

    def test_identical_score_sets(self):
        rng = np.random.default_rng(83)
        scores = rng.uniform(-1, 1, size=10)
        _, _, eer = roc_and_eer(scores, scores)
        assert eer == pytest.approx(50.0, abs=1e-9)
        _, _, eer_odd = roc_and_eer(scores[:5], scores[:5])
        assert eer_odd == pytest.approx(50.0, abs=1e-9)

    def test_hand_worked_crossing(self):
        # FRR plateau at 25 while FAR rises 20 -> 40: crossing at 25
        gen, imp = [1.0, 2.0, 3.0, 10.0], [2.5, 3.5, 4.0, 11.0, 12.0]
        _, _, eer = roc_and_eer(gen, imp)
        assert eer == pytest.approx(25.0, abs=1e-12)
        assert eer == pytest.approx(eer_oracle(gen, imp), abs=1e-9)

    def test_equal_point_crossing(self):
        gen = [-0.9, -0.8, -0.6, -0.3, 0.1]
        imp = [-0.7, -0.5, -0.2, 0.0, 0.3]
        _, _, eer = roc_and_eer(gen, imp)
        assert eer == pytest.approx(40.0, abs=1e-12)
        assert eer == pytest.approx(eer_oracle(gen, imp), abs=1e-9)

    def test_matches_scan_oracle_randomized(self):
        rng = np.random.default_rng(84)
        for _ in range(25):
            n_g = int(rng.integers(3, 40))
            n_i = int(rng.integers(3, 40))
            gen = np.round(rng.normal(-0.5, 0.3, size=n_g), 3)
            imp = np.round(rng.normal(-0.1, 0.3, size=n_i), 3)
            _, _, eer = roc_and_eer(gen, imp)
            assert eer == pytest.approx(eer_oracle(gen, imp), abs=1e-9)
            assert 0.0 <= eer <= 100.0

    def test_curve_monotone_with_correct_endpoints(self):
        rng = np.random.default_rng(85)
        curve, roca, _ = roc_and_eer(rng.normal(size=30), rng.normal(size=40))
        assert np.all(np.diff(curve.far) >= 0)
        assert np.all(np.diff(curve.frr) <= 0)
        assert curve.far[-1] == 100.0
        assert curve.frr[-1] == 0.0
        assert 0.0 <= roca <= 10000.0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(86)
        gen = rng.uniform(-1, 0, size=50)
        imp = rng.uniform(-0.5, 0.5, size=80)
        _, roca_a, eer_a = roc_and_eer(gen, imp)
        _, roca_b, eer_b = roc_and_eer(np.expm1(gen), np.expm1(imp))
        assert eer_a == eer_b
        assert roca_a == roca_b

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            roc_and_eer([], [0.1])


class TestEvaluateAndReport:
    def make_report(self):
        rng = np.random.default_rng(87)
        trials = TrialSet(
            rankings=tuple(rng.integers(1, 9, size=60).tolist()),
            gallery_size=8,
            genuine_scores=tuple(rng.uniform(-1, -0.2, size=30).tolist()),
            impostor_scores=tuple(rng.uniform(-0.6, 0.4, size=40).tolist()))
        return evaluate(trials, targets=(90.0, 99.0, 100.0))

    def test_measures_consistent(self):
        report = self.make_report()
        m = report.measures()
        assert m["first1"] == report.cmc_rate[0]
        assert set(m) == {"first1", "cum@90", "cum@99", "cum@100",
                          "cmca", "roca", "eer"}
        assert m["cum@100"] == 100.0   # full-depth rate always hits 100

    def test_unattainable_target_becomes_nan(self):
        trials = TrialSet(rankings=(1, 2), gallery_size=4)
        report = evaluate(trials, targets=(101.0,))
        assert math.isnan(report.cum[101.0])
        assert math.isnan(report.eer)   # no scores supplied

    def test_report_csv_roundtrip(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "report.csv"
        write_report_csv(path, report, "cd" * 32)
        measures, cmc_pts, roc_pts, prov = read_report_csv(path)
        assert prov == "cd" * 32
        for k, v in report.measures().items():
            assert measures[k] == v
        assert len(cmc_pts) == 8
        assert cmc_pts[-1] == (100.0, report.cmc_rate[-1])
        assert len(roc_pts) == len(report.roc.thresholds)
        assert roc_pts[0][0] == -np.inf
