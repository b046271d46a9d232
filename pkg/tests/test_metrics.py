import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tamperdet.data import make_sample
from tamperdet.errors import EvaluationError
from tamperdet.forge import synthesize_base_image
from tamperdet.metrics import (
    MetricsReport,
    ScoredSample,
    auc,
    build_report,
    com_f1,
    image_metrics,
    optimal_threshold_f1,
    pixel_f1,
    robustness_sweep,
    score_model,
    summarize_report,
    write_curve,
    write_report,
)

from conftest import tiny_model_config


def scored(seg, score, mask, label):
    return ScoredSample(
        seg_map=np.asarray(seg, dtype=np.float64),
        image_score=float(score),
        truth_mask=None if mask is None else np.asarray(mask, dtype=np.uint8),
        truth_label=int(label),
    )


def counting_pixel_oracle(samples, threshold):
    tp = fp = fn = 0
    for s in samples:
        if s.truth_label != 1:
            continue
        for y in range(s.seg_map.shape[0]):
            for x in range(s.seg_map.shape[1]):
                pred = s.seg_map[y, x] >= threshold
                truth = s.truth_mask[y, x] > 0
                tp += pred and truth
                fp += pred and not truth
                fn += (not pred) and truth
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def pairwise_auc_oracle(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def random_scored_batch(rng, n=6, size=8):
    batch = []
    for _ in range(n):
        label = int(rng.random() < 0.7)
        mask = (rng.random((size, size)) > 0.6).astype(np.uint8) if label else None
        if label and mask.sum() == 0:
            mask[0, 0] = 1
        seg = rng.random((size, size))
        batch.append(
            scored(seg, rng.random(), mask if label else None, label)
        )
    return batch


class TestPixelF1:
    def test_exact_prediction(self):
        mask = np.zeros((6, 6), np.uint8)
        mask[2:4, 2:4] = 1
        s = scored(mask.astype(float), 1.0, mask, 1)
        assert pixel_f1([s], 0.5) == (1.0, 1.0, 1.0)

    def test_all_zero_prediction_zero_recall(self):
        mask = np.zeros((6, 6), np.uint8)
        mask[1, 1] = 1
        s = scored(np.zeros((6, 6)), 0.0, mask, 1)
        precision, recall, f1 = pixel_f1([s], 0.5)
        assert recall == 0.0 and f1 == 0.0

    def test_matches_counting_oracle_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            batch = random_scored_batch(rng, n=4, size=8)
            if not any(s.truth_label for s in batch):
                batch[0] = scored(
                    rng.random((8, 8)), 0.9, np.ones((8, 8), np.uint8), 1
                )
            thr = float(rng.uniform(0.2, 0.8))
            assert pixel_f1(batch, thr) == counting_pixel_oracle(batch, thr)

    def test_authentic_samples_ignored(self):
        rng = np.random.default_rng(1)
        mask = (rng.random((8, 8)) > 0.5).astype(np.uint8)
        mask[0, 0] = 1
        manip = scored(rng.random((8, 8)), 0.8, mask, 1)
        noisy_authentic = scored(rng.random((8, 8)), 0.9, None, 0)
        assert pixel_f1([manip], 0.5) == pixel_f1([manip, noisy_authentic], 0.5)

    def test_empty_input_raises(self):
        with pytest.raises(EvaluationError):
            pixel_f1([], 0.5)
        with pytest.raises(EvaluationError):
            pixel_f1([scored(np.zeros((4, 4)), 0.1, None, 0)], 0.5)

    def test_per_image_mode_averages_singletons(self):
        rng = np.random.default_rng(2)
        batch = []
        for _ in range(3):
            mask = (rng.random((8, 8)) > 0.5).astype(np.uint8)
            mask[0, 0] = 1
            batch.append(scored(rng.random((8, 8)), 0.9, mask, 1))
        per_image = pixel_f1(batch, 0.5, pooled=False)
        singles = np.array([pixel_f1([s], 0.5) for s in batch])
        assert per_image == pytest.approx(tuple(singles.mean(axis=0)))


class TestImageMetrics:
    def test_all_correct(self):
        batch = [
            scored(np.zeros((2, 2)), 0.9, np.ones((2, 2), np.uint8), 1),
            scored(np.zeros((2, 2)), 0.1, None, 0),
        ]
        assert image_metrics(batch, 0.5) == (1.0, 1.0, 1.0)

    def test_saturated_positive_classifier(self):
        # the always-positive failure mode: sensitivity 1, specificity 0, F1 0
        batch = [
            scored(np.zeros((2, 2)), 0.99, np.ones((2, 2), np.uint8), 1),
            scored(np.zeros((2, 2)), 0.99, None, 0),
        ] * 3
        assert image_metrics(batch, 0.5) == (1.0, 0.0, 0.0)

    def test_counting_oracle_mixed_set(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            scores = rng.random(10)
            labels = (rng.random(10) > 0.5).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == 10:
                labels[1] = 0
            batch = [
                scored(
                    np.zeros((2, 2)),
                    scores[i],
                    np.ones((2, 2), np.uint8) if labels[i] else None,
                    labels[i],
                )
                for i in range(10)
            ]
            sens, spec, f1 = image_metrics(batch, 0.5)
            tp = sum(scores[i] >= 0.5 for i in range(10) if labels[i] == 1)
            tn = sum(scores[i] < 0.5 for i in range(10) if labels[i] == 0)
            exp_sens = tp / labels.sum()
            exp_spec = tn / (10 - labels.sum())
            assert sens == exp_sens and spec == exp_spec
            expected_f1 = (
                0.0
                if exp_sens == 0 or exp_spec == 0
                else 2 * exp_sens * exp_spec / (exp_sens + exp_spec)
            )
            assert f1 == pytest.approx(expected_f1)

    def test_missing_class_gives_nan_sentinels(self):
        only_pos = [scored(np.zeros((2, 2)), 0.9, np.ones((2, 2), np.uint8), 1)]
        sens, spec, f1 = image_metrics(only_pos, 0.5)
        assert sens == 1.0 and math.isnan(spec) and math.isnan(f1)

    def test_specificity_independent_of_manipulated_samples(self):
        rng = np.random.default_rng(4)
        authentic = [scored(np.zeros((2, 2)), rng.random(), None, 0) for _ in range(5)]
        manipulated = [
            scored(np.zeros((2, 2)), rng.random(), np.ones((2, 2), np.uint8), 1)
            for _ in range(5)
        ]
        _, spec_mixed, _ = image_metrics(authentic + manipulated, 0.5)
        spec_only = image_metrics(authentic, 0.5)[1]
        assert spec_mixed == spec_only

    def test_empty_raises(self):
        with pytest.raises(EvaluationError):
            image_metrics([], 0.5)


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_ties_is_half(self):
        assert auc([0.5] * 6, [1, 1, 1, 0, 0, 0]) == 0.5

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(5, 200))
            # quantized scores produce plenty of ties
            scores = np.round(rng.random(n), 2)
            labels = (rng.random(n) > 0.5).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == n:
                labels[0] = 0
            assert auc(scores, labels) == pytest.approx(
                pairwise_auc_oracle(scores, labels), abs=1e-9
            )

    def test_single_class_raises(self):
        with pytest.raises(EvaluationError):
            auc([0.1, 0.9], [1, 1])


class TestComF1:
    @pytest.mark.parametrize(
        "pair,expected",
        [
            ((0.638, 0.802), 0.711),
            ((0.452, 0.752), 0.565),
            ((0.453, 0.244), 0.317),
            ((0.137, 0.404), 0.205),
        ],
    )
    def test_published_f1_pairs(self, pair, expected):
        assert com_f1(*pair) == pytest.approx(expected, abs=1e-3)

    def test_zero_rule(self):
        for x in (0.0, 0.3, 1.0):
            assert com_f1(x, 0.0) == 0.0
            assert com_f1(0.0, x) == 0.0

    @given(
        st.floats(min_value=0.0, max_value=1.0, allow_subnormal=False),
        st.floats(min_value=0.0, max_value=1.0, allow_subnormal=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        value = com_f1(a, b)
        assert value == com_f1(b, a)
        assert 0.0 <= value <= 1.0
        assert value <= 2.0 * min(a, b) * (1.0 + 1e-12)

    @given(st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=100, deadline=None)
    def test_idempotent_on_diagonal(self, a):
        assert com_f1(a, a) == pytest.approx(a)

    def test_monotone_nondecreasing(self):
        grid = np.linspace(0.05, 1.0, 12)
        for b in (0.2, 0.7):
            values = [com_f1(a, b) for a in grid]
            assert all(x <= y + 1e-12 for x, y in zip(values, values[1:]))

    def test_nan_propagates(self):
        assert math.isnan(com_f1(float("nan"), 0.5))
        assert math.isnan(com_f1(0.5, float("nan")))


class TestOptimalThreshold:
    def test_single_threshold_equals_fixed(self):
        rng = np.random.default_rng(6)
        batch = random_scored_batch(rng)
        thr, f1 = optimal_threshold_f1(batch, grid=[0.5])
        assert thr == 0.5
        assert f1 == pixel_f1(batch, 0.5)[2]

    def test_separable_scores_reach_one(self):
        mask = np.zeros((4, 4), np.uint8)
        mask[:2] = 1
        seg = np.where(mask, 0.8, 0.3)
        batch = [scored(seg, 0.8, mask, 1)]
        thr, f1 = optimal_threshold_f1(batch, grid=np.arange(0.1, 1.0, 0.1))
        assert f1 == 1.0

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(7)
        batch = random_scored_batch(rng, n=5)
        grid = [round(0.1 * k, 1) for k in range(1, 10)]
        thr, f1 = optimal_threshold_f1(batch, grid=grid)
        per_threshold = [(t, counting_pixel_oracle(batch, t)[2]) for t in grid]
        best = max(per_threshold, key=lambda tv: tv[1])
        assert f1 == best[1]

    def test_ties_resolve_to_lowest_threshold(self):
        mask = np.zeros((4, 4), np.uint8)
        mask[:2] = 1
        seg = np.where(mask, 0.9, 0.1)  # any threshold in (0.1, 0.9] gives F1 1
        batch = [scored(seg, 0.9, mask, 1)]
        thr, f1 = optimal_threshold_f1(batch, grid=[0.3, 0.5, 0.7])
        assert f1 == 1.0 and thr == 0.3

    def test_empty_grid_raises(self):
        with pytest.raises(EvaluationError):
            optimal_threshold_f1([scored(np.zeros((2, 2)), 0.1, None, 0)], grid=[])


class TestReport:
    def test_build_report_consistency(self):
        rng = np.random.default_rng(8)
        batch = random_scored_batch(rng, n=8)
        report = build_report(batch)
        assert report.com_f1 == com_f1(report.pixel_f1, report.image_f1)
        assert report.threshold_mode == "fixed(0.500)"
        assert "pixel_f1" in summarize_report(report)

    def test_optimal_mode_never_below_fixed(self):
        rng = np.random.default_rng(9)
        batch = random_scored_batch(rng, n=8)
        fixed = build_report(batch, mode="fixed")
        optimal = build_report(batch, mode="optimal")
        assert optimal.pixel_f1 >= fixed.pixel_f1

    def test_report_file_format(self, tmp_path):
        rng = np.random.default_rng(10)
        batch = random_scored_batch(rng, n=8)
        report = build_report(batch)
        path = tmp_path / "report.txt"
        write_report(report, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 8
        assert all(len(line.split(",")) == 3 for line in lines)

    def test_undefined_rendered_for_missing_class(self, tmp_path):
        batch = [
            scored(np.ones((2, 2)) * 0.9, 0.9, np.ones((2, 2), np.uint8), 1)
        ]
        report = build_report(batch)
        assert math.isnan(report.specificity)
        path = tmp_path / "report.txt"
        write_report(report, path)
        text = path.read_text()
        assert "specificity,fixed(0.500),undefined" in text

    def test_unknown_mode_rejected(self):
        with pytest.raises(EvaluationError):
            build_report([scored(np.zeros((2, 2)), 0.5, None, 0)], mode="adaptive")


@pytest.fixture(scope="module")
def sweep_setup():
    from tamperdet.model import TwoBranchNet

    rng = np.random.default_rng(11)
    net = TwoBranchNet(tiny_model_config(seed=2))
    samples = []
    for _ in range(3):
        image = synthesize_base_image(rng, 64)
        mask = np.zeros((64, 64), np.uint8)
        mask[10:30, 10:30] = 1
        samples.append(make_sample(image, mask))
    return net, samples


class TestRobustnessSweep:
    def test_identity_levels_match_unperturbed(self, sweep_setup):
        net, samples = sweep_setup
        baseline = pixel_f1(score_model(net, samples), 0.5)[2]
        jpeg_curve = robustness_sweep(net, samples, "jpeg", [100])
        blur_curve = robustness_sweep(net, samples, "blur", [0])
        assert jpeg_curve[0][1] == pytest.approx(baseline, abs=1e-6)
        assert blur_curve[0][1] == pytest.approx(baseline, abs=1e-6)

    def test_curve_length_matches_levels(self, sweep_setup):
        net, samples = sweep_setup
        curve = robustness_sweep(net, samples, "jpeg", [100, 90, 70, 50])
        assert [level for level, _ in curve] == [100, 90, 70, 50]

    def test_single_image_matches_direct_evaluation(self, sweep_setup):
        from tamperdet.data import apply_jpeg

        net, samples = sweep_setup
        single = [samples[0]]
        curve = robustness_sweep(net, single, "jpeg", [80])
        perturbed = [make_sample(apply_jpeg(single[0].image, 80), single[0].mask)]
        direct = pixel_f1(score_model(net, perturbed), 0.5)[2]
        assert curve[0][1] == pytest.approx(direct, abs=1e-7)

    def test_unknown_kind_rejected(self, sweep_setup):
        net, samples = sweep_setup
        with pytest.raises(EvaluationError):
            robustness_sweep(net, samples, "rotate", [1.0])

    def test_curve_file_format(self, tmp_path):
        path = tmp_path / "curve.csv"
        write_curve([(100.0, 0.5), (90.0, 0.25)], path)
        assert path.read_text() == "100,0.500000\n90,0.250000\n"
