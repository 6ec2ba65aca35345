import numpy as np
import pytest

import classifier.selection as selection
from capture.records import Label
from classifier.errors import DegenerateFold, EmptyPoolAfterScreening, TooFewDevices
from classifier.linear import LabeledSlot
from classifier.selection import (
    SelectionConfig,
    SelectionResult,
    cross_val_predictions,
    feature_separation,
    greedy_select,
    kfold_device_split,
    score_feature_set,
)
from features.extractor import FeatureId, SlotFeatureVector

A, B, C, D = FeatureId.PKT_COUNT, FeatureId.BANDWIDTH_BYTES, FeatureId.AVG_PKT_LEN, FeatureId.AVG_INTERLEAVE

FAST = SelectionConfig(max_iter=300)


def _slot(device, label, start, values):
    return LabeledSlot(SlotFeatureVector(device, float(start), 600.0, dict(values)), label)


def _paired_folds(n_pairs):
    """One IoT and one NoT device per fold; devices are iot<i> / not<i>."""
    return [[f'iot{i}', f'not{i}'] for i in range(n_pairs)]


def _dataset(make_values, n_pairs=5, per_device=6, seed=0):
    rng = np.random.default_rng(seed)
    slots = []
    for i in range(n_pairs):
        for device, label in ((f'iot{i}', Label.IOT), (f'not{i}', Label.NOT)):
            for t in range(per_device):
                slots.append(_slot(device, label, t * 600, make_values(rng, label)))
    return slots


class TestKFold:
    def test_singleton_folds(self):
        folds = kfold_device_split(['e', 'a', 'c', 'b', 'd'], 5, seed=0)
        assert sorted(fold[0] for fold in folds) == ['a', 'b', 'c', 'd', 'e']
        assert all(len(fold) == 1 for fold in folds)

    def test_fold_sizes(self):
        folds = kfold_device_split([f'd{i}' for i in range(7)], 5, seed=3)
        assert [len(fold) for fold in folds] == [2, 2, 1, 1, 1]

    def test_partition_and_reproducibility(self):
        devices = [f'dev{i:02d}' for i in range(40)]
        for seed in (1, 2):
            folds = kfold_device_split(devices, 5, seed)
            assert sorted(d for fold in folds for d in fold) == devices
            assert [len(fold) for fold in folds] == [8] * 5
            assert kfold_device_split(reversed(devices), 5, seed) == folds
        assert kfold_device_split(devices, 5, 1) != kfold_device_split(devices, 5, 2)

    def test_too_few_devices(self):
        with pytest.raises(TooFewDevices):
            kfold_device_split(['a', 'b', 'a'], 3, seed=0)


class TestScoreFeatureSet:
    def test_perfect_feature(self):
        slots = _dataset(lambda rng, label: {A: 10.0 if label is Label.IOT else 1000.0})
        assert score_feature_set([A], slots, _paired_folds(5), FAST) == 1.0

    def test_noise_feature(self):
        slots = _dataset(lambda rng, label: {A: float(rng.uniform(0, 100))}, n_pairs=10, per_device=20, seed=5)
        folds = [_paired_folds(10)[i] + _paired_folds(10)[i + 5] for i in range(5)]
        assert score_feature_set([A], slots, folds, FAST) < 0.75

    def test_all_missing_fold_scores_zero(self):
        def values(rng, label):
            return {A: 1.0 if label is Label.IOT else 5.0}

        slots = _dataset(values, n_pairs=2)
        # B exists only on the pair-0 devices, so the fold testing them trains without it
        slots = [_slot(s.device_key, s.label, s.vector.slot_start, {**s.vector.features, B: 3.0})
                 if s.device_key.endswith('0') else s for s in slots]
        score = score_feature_set([A, B], slots, _paired_folds(2), FAST)
        assert score == 0.5

    def test_degenerate_fold(self):
        slots = _dataset(lambda rng, label: {A: 1.0}, n_pairs=2)
        folds = [['iot0', 'iot1'], ['not0', 'not1']]
        with pytest.raises(DegenerateFold):
            score_feature_set([A], slots, folds, FAST)

    def test_cross_val_predictions_cover_every_slot(self):
        slots = _dataset(lambda rng, label: {A: 10.0 if label is Label.IOT else 1000.0})
        predictions = cross_val_predictions([A], slots, _paired_folds(5), FAST)
        assert sorted((d, truth) for d, truth, _ in predictions) == sorted((s.device_key, s.label) for s in slots)
        assert all(verdict.matches(truth) for _, truth, verdict in predictions)


class TestGreedySelection:
    @pytest.fixture
    def scripted(self, monkeypatch):
        """Replace fold scoring by a lookup table keyed on the feature set."""
        table = {}
        monkeypatch.setattr(selection, 'score_feature_set',
                            lambda features, slots, folds, cfg: table.get(frozenset(features), 0.0))
        return table

    def test_gain_rule(self, scripted):
        scripted.update({
            frozenset({A, B}): 0.90,
            frozenset({A, B, C}): 0.905,
            frozenset({A, B, C, D}): 0.9055,
        })
        screened = {A: 0.80, B: 0.70, C: 0.60, D: 0.55}
        result = greedy_select([A, B, C, D], [], SelectionConfig(alpha=0.01), folds=[['x']], screened=screened)
        assert result.selected == (A, B, C)
        assert [(fs, score) for fs, score in result.trace if len(fs) == 4] == [((A, B, C, D), 0.9055)]

    def test_single_candidate(self, scripted):
        result = greedy_select([A, B], [], SelectionConfig(), folds=[['x']], screened={A: 0.7, B: 0.5})
        assert result.selected == (A,)

    def test_ties_go_to_canonical_order(self, scripted):
        scripted.update({frozenset({A, B}): 0.9, frozenset({A, C}): 0.9})
        result = greedy_select([C, B, A], [], SelectionConfig(), folds=[['x']], screened={A: 0.8, B: 0.8, C: 0.8})
        assert result.selected[:2] == (A, B)

    def test_perfect_score_stops(self, scripted):
        scripted.update({frozenset({A, B}): 0.99})
        result = greedy_select([A, B], [], SelectionConfig(), folds=[['x']], screened={A: 1.0, B: 0.9})
        assert result.selected == (A,)
        assert len(result.trace) == 2

    def test_empty_pool(self, scripted):
        with pytest.raises(EmptyPoolAfterScreening):
            greedy_select([A, B], [], SelectionConfig(), folds=[['x']], screened={A: 0.5, B: 0.1})

    def test_result_dict(self, scripted):
        scripted.update({frozenset({A, B}): 0.95})
        result = greedy_select([A, B], [], SelectionConfig(slot_width=300), folds=[['x']],
                               screened={A: 0.8, B: 0.7})
        assert result.to_dict() == {
            'slot_width': 300,
            'screened': {'pkt_count': 0.8, 'bandwidth_bytes': 0.7},
            'chain': [
                {'set': ['pkt_count'], 'f1': 0.8},
                {'set': ['bandwidth_bytes'], 'f1': 0.7},
                {'set': ['pkt_count', 'bandwidth_bytes'], 'f1': 0.95},
            ],
            'selected': ['pkt_count', 'bandwidth_bytes'],
        }

    def test_matches_exhaustive_rescoring(self):
        def values(rng, label):
            sign = 1.0 if label is Label.IOT else -1.0
            return {
                A: sign * 1.0 + rng.normal(0, 1.5),
                B: sign * 0.6 + rng.normal(0, 1.5),
                C: sign * 0.3 + rng.normal(0, 1.5),
                D: rng.normal(0, 1.0),
            }

        slots = _dataset(values, n_pairs=5, per_device=8, seed=13)
        folds = _paired_folds(5)
        cfg = SelectionConfig(alpha=0.0, screen_threshold=0.0, max_iter=300)
        result = greedy_select([A, B, C, D], slots, cfg, folds=folds)

        pool = [f for f in (A, B, C, D) if score_feature_set([f], slots, folds, cfg) > 0.0]
        current, current_score = (), 0.0
        for f in pool:
            s = score_feature_set([f], slots, folds, cfg)
            if s > current_score or not current:
                current, current_score = (f,), s
        while current_score < 1.0:
            options = [current + (f,) for f in pool if f not in current]
            if not options:
                break
            rescored = [(fs, score_feature_set(fs, slots, folds, cfg)) for fs in options]
            best, best_score = rescored[0]
            for fs, s in rescored[1:]:
                if s > best_score:
                    best, best_score = fs, s
            if (best_score - current_score) / (1.0 - current_score) < 0.0:
                break
            current, current_score = best, best_score

        assert result.selected == current

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SelectionConfig(k=1)
        with pytest.raises(ValueError):
            SelectionConfig(alpha=1.0)


class TestFeatureSeparation:
    def test_perfect_and_absent_features(self):
        slots = _dataset(lambda rng, label: {A: (10.0 if label is Label.IOT else 1000.0) + rng.normal()},
                         n_pairs=3, per_device=4)
        report = feature_separation(slots, [A, B])
        assert report[A].coverage == 1.0
        assert report[A].auc == 0.0
        assert report[A].t_statistic < 0
        assert report[A].p_value < 1e-6
        assert report[B] == selection.FeatureSeparation(coverage=0.0, t_statistic=None, p_value=None, auc=None)

    def test_constant_feature_has_no_t_statistic(self):
        slots = _dataset(lambda rng, label: {A: 1.0}, n_pairs=2, per_device=3)
        report = feature_separation(slots, [A])
        assert report[A].t_statistic is None
        assert report[A].auc == 0.5


def test_selection_result_defaults():
    assert SelectionResult(selected=(A,)).to_dict()['chain'] == []
