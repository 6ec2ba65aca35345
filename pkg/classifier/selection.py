"""
Feature selection for the traffic classifier.

Every candidate feature is first scored alone with device-level k-fold
cross-validation; features above the screening threshold form the pool.
The feature set is then grown greedily, one feature at a time, for as long
as the relative F1 gain (new - cur) / (1 - cur) of the best extension stays
at or above alpha.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from tqdm import tqdm

from capture.records import Label
from classifier.errors import AllMissing, DegenerateFold, EmptyPoolAfterScreening, TooFewDevices
from classifier.linear import (
    DEFAULT_LAMBDA,
    DEFAULT_MAX_ITER,
    DEFAULT_SAMPLES_PER_DEVICE,
    DEFAULT_TOL,
    LabeledSlot,
    predict,
    train_linear_model,
)
from classifier.verdict import Verdict
from evaluation.metrics import Confusion, compute_metrics
from features.extractor import ALL_FEATURES, FeatureId

logger = logging.getLogger(__name__)

DevicePrediction = Tuple[str, Label, Verdict]


@dataclass(frozen=True)
class SelectionConfig:
    """
    Cross-validation and selection settings.

    k: fold count
    alpha: minimum relative F1 gain for growing the feature set
    screen_threshold: single-feature F1 a feature must exceed to enter the pool
    seed: fold-split seed
    slot_width: slot width (seconds) of the slots being scored
    """

    k: int = 5
    alpha: float = 0.01
    screen_threshold: float = 0.5
    seed: int = 0
    slot_width: float = 600
    lam: float = DEFAULT_LAMBDA
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    samples_per_device: int = DEFAULT_SAMPLES_PER_DEVICE
    max_workers: int = 1

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f'k must be >= 2, got {self.k}')
        if not 0 <= self.alpha < 1:
            raise ValueError(f'alpha must be in [0, 1), got {self.alpha}')
        if not 0 <= self.screen_threshold <= 1:
            raise ValueError(f'screen_threshold must be in [0, 1], got {self.screen_threshold}')


@dataclass
class SelectionResult:
    selected: Tuple[FeatureId, ...]
    trace: List[Tuple[Tuple[FeatureId, ...], float]] = field(default_factory=list)
    screened: Dict[FeatureId, float] = field(default_factory=dict)
    slot_width: float = 600

    def to_dict(self) -> Dict[str, Any]:
        return {
            'slot_width': self.slot_width,
            'screened': {feature.value: score for feature, score in self.screened.items()},
            'chain': [{'set': [feature.value for feature in fs], 'f1': score} for fs, score in self.trace],
            'selected': [feature.value for feature in self.selected],
        }


def kfold_device_split(devices: Iterable[str], k: int, seed: int) -> List[List[str]]:
    """
    Partition devices into k folds: sort, shuffle with the seed, deal round-robin.

    Raises:
        TooFewDevices if there are fewer devices than folds
    """
    ordered = sorted(set(devices))
    if len(ordered) < k:
        raise TooFewDevices(f'{len(ordered)} devices cannot be split into {k} folds')
    permutation = np.random.default_rng(seed).permutation(len(ordered))
    folds: List[List[str]] = [[] for _ in range(k)]
    for position, index in enumerate(permutation):
        folds[position % k].append(ordered[index])
    return [sorted(fold) for fold in folds]


def _fold_predictions(features: Sequence[FeatureId], slots: Sequence[LabeledSlot], test_devices: Sequence[str],
                      cfg: SelectionConfig) -> List[DevicePrediction]:
    test_set = set(test_devices)
    train = [slot for slot in slots if slot.device_key not in test_set]
    test = [slot for slot in slots if slot.device_key in test_set]

    if len({slot.label for slot in train}) < 2:
        raise DegenerateFold(f'training side of fold {sorted(test_set)} holds a single class')

    model = train_linear_model(train, features, cfg.slot_width, lam=cfg.lam, max_iter=cfg.max_iter, tol=cfg.tol,
                               samples_per_device=cfg.samples_per_device, seed=cfg.seed)
    return [(slot.device_key, slot.label, predict(model, slot.vector).verdict) for slot in test]


def score_feature_set(features: Sequence[FeatureId], slots: Sequence[LabeledSlot], folds: Sequence[Sequence[str]],
                      cfg: SelectionConfig) -> float:
    """
    Mean F1 of a feature set over the folds.

    Each fold trains on the other folds' devices and pools the confusion of
    its own test slots. A fold with undefined F1, or whose training side has
    a feature missing everywhere, scores 0.

    Raises:
        DegenerateFold
    """
    if not features:
        raise ValueError('feature set is empty')
    scores = []
    for fold in folds:
        try:
            predictions = _fold_predictions(features, slots, fold, cfg)
        except AllMissing as e:
            logger.info('fold scored 0 for %s: %s', ', '.join(f.value for f in features), e)
            scores.append(0.0)
            continue
        f1 = compute_metrics(Confusion.from_predictions((truth, verdict) for _, truth, verdict in predictions)).f1
        scores.append(f1 if f1 is not None else 0.0)
    return sum(scores) / len(scores)


def cross_val_predictions(features: Sequence[FeatureId], slots: Sequence[LabeledSlot],
                          folds: Sequence[Sequence[str]], cfg: SelectionConfig) -> List[DevicePrediction]:
    """Every slot's (device, truth, verdict) when its device's fold is the test fold."""
    predictions = []
    for fold in folds:
        predictions.extend(_fold_predictions(features, slots, fold, cfg))
    return predictions


def _score_many(candidates: Sequence[Tuple[FeatureId, ...]], slots: Sequence[LabeledSlot],
                folds: Sequence[Sequence[str]], cfg: SelectionConfig, desc: str, progress: bool) -> List[float]:
    """Score feature sets concurrently; results keep the order of candidates."""
    with ThreadPoolExecutor(max_workers=max(1, cfg.max_workers)) as executor:
        results = executor.map(lambda fs: score_feature_set(fs, slots, folds, cfg), candidates)
        return list(tqdm(results, total=len(candidates), desc=desc, unit='set', disable=not progress))


def screen_features(pool: Sequence[FeatureId], slots: Sequence[LabeledSlot], folds: Sequence[Sequence[str]],
                    cfg: SelectionConfig, progress: bool = False) -> Dict[FeatureId, float]:
    """Single-feature mean F1 of every feature in pool, in canonical order."""
    ordered = [feature for feature in ALL_FEATURES if feature in set(pool)]
    scores = _score_many([(feature,) for feature in ordered], slots, folds, cfg, 'Screening', progress)
    return dict(zip(ordered, scores))


def _argmax(scored: Sequence[Tuple[Tuple[FeatureId, ...], float]]) -> Tuple[Tuple[FeatureId, ...], float]:
    """First best entry; callers pass candidates in canonical feature order."""
    best = scored[0]
    for entry in scored[1:]:
        if entry[1] > best[1]:
            best = entry
    return best


def greedy_select(pool: Sequence[FeatureId], slots: Sequence[LabeledSlot], cfg: SelectionConfig,
                  folds: Optional[Sequence[Sequence[str]]] = None,
                  screened: Optional[Dict[FeatureId, float]] = None, progress: bool = False) -> SelectionResult:
    """
    Screen pool, then grow a feature set greedily.

    Args:
        pool: Candidate features
        slots: Labeled slots of width cfg.slot_width
        cfg: Selection settings
        folds: Device folds; split from the slots' devices with cfg.seed when omitted
        screened: Precomputed single-feature scores (must cover pool)
        progress: Show tqdm bars

    Raises:
        EmptyPoolAfterScreening, TooFewDevices, DegenerateFold
    """
    if folds is None:
        folds = kfold_device_split((slot.device_key for slot in slots), cfg.k, cfg.seed)
    if screened is None:
        screened = screen_features(pool, slots, folds, cfg, progress)

    candidates = [feature for feature in ALL_FEATURES if feature in set(pool) and screened[feature] > cfg.screen_threshold]
    if not candidates:
        raise EmptyPoolAfterScreening(
            f'no feature scored above {cfg.screen_threshold} on its own at {cfg.slot_width:g}s slots')
    logger.info('%d of %d features passed screening', len(candidates), len(pool))

    trace = [((feature,), screened[feature]) for feature in candidates]
    current, current_score = _argmax(trace)

    while current_score < 1.0:
        remaining = [feature for feature in candidates if feature not in current]
        if not remaining:
            break
        extensions = [current + (feature,) for feature in remaining]
        scores = _score_many(extensions, slots, folds, cfg, f'Extending {len(current)}-feature set', progress)
        scored = list(zip(extensions, scores))
        trace.extend(scored)

        best, best_score = _argmax(scored)
        gain = (best_score - current_score) / (1.0 - current_score)
        if gain < cfg.alpha:
            logger.info('stopping at %d features: relative gain %.4f < alpha %.4f', len(current), gain, cfg.alpha)
            break
        current, current_score = best, best_score

    logger.info('selected %s (F1 %.4f)', ', '.join(f.value for f in current), current_score)
    return SelectionResult(selected=current, trace=trace, screened=dict(screened), slot_width=cfg.slot_width)


@dataclass(frozen=True)
class FeatureSeparation:
    coverage: float
    t_statistic: Optional[float]
    p_value: Optional[float]
    auc: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {'coverage': self.coverage, 't_statistic': self.t_statistic, 'p_value': self.p_value, 'auc': self.auc}


def _finite(value) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


def feature_separation(slots: Sequence[LabeledSlot],
                       features: Sequence[FeatureId] = ALL_FEATURES) -> Dict[FeatureId, FeatureSeparation]:
    """
    How well each feature separates IoT from NoT slots on its own.

    Coverage is the fraction of slots where the feature is present. The
    Welch t-test and the AUC (Mann-Whitney U / (n_iot * n_not), IoT as the
    first sample) use present values only and are None when undefined.
    """
    report = {}
    for feature in features:
        iot = [s.vector.get(feature) for s in slots if s.label is Label.IOT and s.vector.get(feature) is not None]
        not_iot = [s.vector.get(feature) for s in slots if s.label is Label.NOT and s.vector.get(feature) is not None]
        coverage = (len(iot) + len(not_iot)) / len(slots) if slots else 0.0

        t_statistic = p_value = auc = None
        if len(iot) >= 2 and len(not_iot) >= 2:
            result = stats.ttest_ind(iot, not_iot, equal_var=False)
            t_statistic, p_value = _finite(result.statistic), _finite(result.pvalue)
        if iot and not_iot:
            u = stats.mannwhitneyu(iot, not_iot, alternative='two-sided').statistic
            auc = _finite(u / (len(iot) * len(not_iot)))

        report[feature] = FeatureSeparation(coverage=coverage, t_statistic=t_statistic, p_value=p_value, auc=auc)
    return report
