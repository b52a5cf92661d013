import numpy as np
import pandas as pd
import pytest

from sasvfusion.exceptions import ContractViolation
from sasvfusion.metrics import (
    ADcfConfig,
    MinADcfMetric,
    SasvEerMetric,
    ScoreEvaluator,
    ScoreSet,
    bootstrap_ci,
    eer,
    error_rates_at,
    histogram,
    histogram_frame,
    metric_by_name,
    min_adcf,
    read_scores,
    sasv_eer,
    spf_eer,
    sv_eer,
    write_histograms,
    write_metric_report,
    write_scores,
)


def brute_force_eer(targets, impostors):
    """Sweep every candidate threshold in a plain loop; interpolate at the first crossing."""
    candidates = [-np.inf] + sorted(set(targets) | set(impostors))
    previous = None
    for t in candidates:
        frr = sum(1 for x in targets if x <= t) / len(targets)
        far = sum(1 for x in impostors if x > t) / len(impostors)
        if far - frr <= 0:
            if far == frr:
                return frr
            prev_frr, prev_far = previous
            gap_prev, gap = prev_far - prev_frr, far - frr
            alpha = gap_prev / (gap_prev - gap)
            return prev_frr + alpha * (frr - prev_frr)
        previous = (frr, far)
    raise AssertionError("rates never cross")


def brute_force_min_adcf(tar, non, spf, cfg=ADcfConfig()):
    best = np.inf
    for t in [-np.inf] + sorted(set(tar) | set(non) | set(spf)):
        p_miss = np.mean(np.asarray(tar) <= t)
        p_fa_non = np.mean(np.asarray(non) > t)
        p_fa_spf = np.mean(np.asarray(spf) > t)
        cost = cfg.c_miss * cfg.pi_tar * p_miss + cfg.c_fa_non * cfg.pi_non * p_fa_non \
            + cfg.c_fa_spf * cfg.pi_spf * p_fa_spf
        best = min(best, cost / cfg.normalizer)
    return best


def random_scores(rng, max_per_class=300):
    n_tar, n_non, n_spf = rng.integers(1, max_per_class + 1, size=3)
    # coarse rounding forces ties within and across classes
    decimals = int(rng.integers(1, 4))
    return ScoreSet.from_classes(
        np.round(rng.normal(0.7, 0.15, n_tar), decimals),
        np.round(rng.normal(0.3, 0.15, n_non), decimals),
        np.round(rng.normal(0.55, 0.2, n_spf), decimals),
    )


def gaussian_scores(rng, n):
    return ScoreSet.from_classes(rng.normal(1.0, 1.0, n), rng.normal(-1.0, 1.0, n), rng.normal(-0.5, 1.0, n))


class TestErrorRates:
    def test_counts_at_threshold(self):
        scores = ScoreSet.from_classes([0.6, 0.8], [0.2, 0.7], [0.5, 0.9])
        rates = error_rates_at(scores, 0.65)
        assert (rates.p_miss, rates.p_fa_non, rates.p_fa_spf) == (0.5, 0.5, 0.5)

    def test_score_equal_to_threshold_is_rejected(self):
        rates = error_rates_at(ScoreSet.from_classes([0.5], [0.5], [0.5]), 0.5)
        assert (rates.p_miss, rates.p_fa_non, rates.p_fa_spf) == (1.0, 0.0, 0.0)

    def test_empty_class(self):
        with pytest.raises(ContractViolation):
            error_rates_at(ScoreSet.from_classes([0.5], [0.1]), 0.3)


class TestEer:
    def test_perfect_separation(self):
        scores = ScoreSet.from_classes([0.8, 0.9], [0.1], [0.2])
        value, threshold = sasv_eer(scores)
        assert value == 0.0
        assert 0.2 < threshold < 0.8

    def test_identical_distributions(self):
        assert eer([0.3, 0.5], [0.3, 0.5])[0] == 0.5

    def test_interpolated_crossing(self):
        value, threshold = eer([0.2, 0.6, 0.7, 0.8], [0.1, 0.3, 0.4, 0.65])
        assert value == pytest.approx(brute_force_eer([0.2, 0.6, 0.7, 0.8], [0.1, 0.3, 0.4, 0.65]), abs=1e-15)
        assert 0.1 <= threshold <= 0.8

    def test_sub_metrics_use_their_impostor_class(self):
        scores = ScoreSet.from_classes([0.8, 0.9], [0.1, 0.2], [0.85, 0.95])
        assert sv_eer(scores)[0] == 0.0
        assert spf_eer(scores)[0] == 0.5
        # spoofs outscore half the targets, so the pooled impostors cross at one half
        assert sasv_eer(scores)[0] == 0.5

    def test_needs_targets_and_impostors(self):
        with pytest.raises(ContractViolation):
            sasv_eer(ScoreSet.from_classes([], [0.1], [0.2]))
        with pytest.raises(ContractViolation):
            eer([0.5], [])

    def test_agrees_with_brute_force(self, rng):
        for _ in range(100):
            scores = random_scores(rng)
            tar = scores.of_class("target").tolist()
            impostors = scores.of_class("nontarget").tolist() + scores.of_class("spoof").tolist()
            assert abs(sasv_eer(scores)[0] - brute_force_eer(tar, impostors)) <= 1e-12


class TestMinADcf:
    def test_perfect_separation_costs_nothing(self):
        assert min_adcf(ScoreSet.from_classes([0.9], [0.1], [0.2]))[0] == 0.0

    def test_constant_scores_cost_one(self):
        assert min_adcf(ScoreSet.from_classes([0.5, 0.5], [0.5], [0.5]))[0] == pytest.approx(1.0, abs=1e-15)

    def test_agrees_with_brute_force_and_is_bounded(self, rng):
        for _ in range(100):
            scores = random_scores(rng)
            value, _ = min_adcf(scores)
            expected = brute_force_min_adcf(*(scores.of_class(c).tolist() for c in ("target", "nontarget", "spoof")))
            assert abs(value - expected) <= 1e-12
            assert 0.0 <= value <= 1.0

    def test_custom_costs(self):
        cfg = ADcfConfig(pi_tar=0.5, pi_non=0.25, pi_spf=0.25, c_miss=1.0, c_fa_non=1.0, c_fa_spf=1.0)
        scores = ScoreSet.from_classes([0.4, 0.9], [0.1, 0.5], [0.2, 0.3])
        assert min_adcf(scores, cfg)[0] == pytest.approx(
            brute_force_min_adcf([0.4, 0.9], [0.1, 0.5], [0.2, 0.3], cfg), abs=1e-15)

    def test_config_validated(self):
        with pytest.raises(ContractViolation):
            ADcfConfig(pi_tar=0.5)
        with pytest.raises(ContractViolation):
            ADcfConfig(c_miss=0.0)


def test_metrics_invariant_under_increasing_transform(rng):
    for _ in range(20):
        scores = ScoreSet.from_classes(rng.uniform(0.3, 1.0, 120), rng.uniform(0.0, 0.6, 90), rng.uniform(0.1, 0.9, 60))
        cubed = ScoreSet(scores.labels, scores.s_sasv ** 3, scores.s_cm)
        assert abs(sasv_eer(scores)[0] - sasv_eer(cubed)[0]) <= 1e-12
        assert abs(min_adcf(scores)[0] - min_adcf(cubed)[0]) <= 1e-12


class TestBootstrap:
    def test_deterministic_in_seed(self, rng):
        scores = gaussian_scores(rng, 40)
        a = bootstrap_ci(scores, "sasv_eer", replicates=50, seed=3)
        assert a == bootstrap_ci(scores, "sasv_eer", replicates=50, seed=3)
        assert a == bootstrap_ci(scores, "sasv_eer", replicates=50, seed=3, n_jobs=2)
        assert a.lower <= a.upper
        assert a.point == sasv_eer(scores)[0]

    def test_degenerate_scores(self):
        scores = ScoreSet.from_classes([0.9] * 5, [0.1] * 4, [0.2] * 3)
        for metric in ("sasv_eer", "min_adcf"):
            ci = bootstrap_ci(scores, metric, replicates=100, seed=0)
            assert (ci.point, ci.lower, ci.upper) == (0.0, 0.0, 0.0)

    def test_interval_narrows_with_more_trials(self):
        def median_width(n):
            widths = []
            for seed in range(10):
                scores = gaussian_scores(np.random.default_rng(seed), n)
                ci = bootstrap_ci(scores, "sasv_eer", replicates=200, seed=seed)
                widths.append(ci.upper - ci.lower)
            return np.median(widths)

        assert median_width(300) < median_width(30)

    def test_single_score_class_is_rejected(self):
        with pytest.raises(ContractViolation):
            bootstrap_ci(ScoreSet.from_classes([0.9, 0.8], [0.1], [0.2, 0.3]), replicates=10)

    def test_arguments_validated(self, rng):
        scores = gaussian_scores(rng, 5)
        with pytest.raises(ContractViolation):
            bootstrap_ci(scores, replicates=0)
        with pytest.raises(ContractViolation):
            bootstrap_ci(scores, level=1.0)
        with pytest.raises(ContractViolation):
            bootstrap_ci(scores, metric="accuracy")


class TestHistogram:
    def test_single_score_lands_in_upper_bin(self):
        h = histogram(ScoreSet.from_classes([0.5], [0.1], [0.2]), "target", bins=2)
        np.testing.assert_array_equal(h.density, [0.0, 2.0])
        np.testing.assert_array_equal(h.edges, [0.0, 0.5, 1.0])

    def test_uniform_scores_have_unit_density(self):
        values = (np.arange(10) + 0.5) / 10
        h = histogram(ScoreSet.from_classes(values, [0.1], [0.2]), "target", bins=10)
        np.testing.assert_allclose(h.density, 1.0)

    def test_densities_integrate_to_one(self, rng):
        scores = ScoreSet.from_classes(rng.uniform(size=500), rng.beta(2, 5, 300), rng.uniform(-0.2, 1.3, 200))
        for label in ("target", "nontarget", "spoof"):
            h = histogram(scores, label, bins=17)
            assert np.sum(h.density * h.widths) == pytest.approx(1.0, abs=1e-12)

    def test_empty_class(self):
        h = histogram(ScoreSet.from_classes([0.5], [0.1]), "spoof", bins=4)
        assert h.empty and h.count == 0
        np.testing.assert_array_equal(h.density, np.zeros(4))

    def test_invalid(self):
        scores = ScoreSet.from_classes([0.5], [0.1], [0.2])
        with pytest.raises(ContractViolation):
            histogram(scores, "target", bins=0)
        with pytest.raises(ContractViolation):
            histogram(scores, "target", value_range=(1.0, 1.0))

    def test_csv_export(self, tmp_path):
        scores = ScoreSet.from_classes([0.9, 0.8], [0.1, 0.3], [0.6])
        path = write_histograms(scores, tmp_path / "hist.csv", bins=5)
        df = pd.read_csv(path)
        assert list(df.columns) == ["bin_left", "bin_right", "target", "nontarget", "spoof"]
        assert len(df) == 5
        pd.testing.assert_frame_equal(df, histogram_frame(scores, bins=5), check_exact=False, rtol=1e-15)


class TestScoreEvaluator:
    def test_report_rows(self, rng, tmp_path):
        report = ScoreEvaluator(replicates=20, seed=1).evaluate(gaussian_scores(rng, 30))
        assert list(report.columns) == ["metric", "point", "ci_lower", "ci_upper", "threshold"]
        assert list(report["metric"]) == ["sasv_eer", "min_adcf", "sv_eer", "spf_eer"]
        assert (report["ci_lower"] <= report["ci_upper"]).all()
        path = write_metric_report(report, tmp_path / "metrics.tsv")
        assert path.read_text(encoding="utf-8").startswith("metric\tpoint\t")

    def test_without_bootstrap(self, rng):
        evaluator = ScoreEvaluator(replicates=0)
        evaluator.set_metrics([SasvEerMetric(), MinADcfMetric()])
        report = evaluator.evaluate(gaussian_scores(rng, 10))
        assert len(report) == 2
        assert report["ci_lower"].isna().all()

    def test_cm_column(self):
        scores = ScoreSet(["target", "nontarget", "spoof"], [0.1, 0.9, 0.8], [0.9, 0.8, 0.1])
        assert SasvEerMetric(("spoof",)).compute(scores, "s_cm")[0] == 0.0
        assert SasvEerMetric(("spoof",)).compute(scores)[0] == 1.0

    def test_unknown_metric(self):
        with pytest.raises(ContractViolation):
            metric_by_name("dcf")


class TestScoreFiles:
    def test_round_trip(self, rng, tmp_path):
        scores = ScoreSet(["target", "spoof", "nontarget"], rng.uniform(size=3), rng.uniform(size=3), ["a", "b", "c"])
        path = write_scores(scores, tmp_path / "scores.tsv")
        restored = read_scores(path)
        assert restored.test_ids == ["a", "b", "c"]
        assert list(restored.labels) == ["target", "spoof", "nontarget"]
        assert restored.s_sasv.tobytes() == scores.s_sasv.tobytes()

    def test_rejects_non_finite(self):
        with pytest.raises(ContractViolation):
            ScoreSet(["target"], [np.nan], [0.5])
