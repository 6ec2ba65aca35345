"""
Traffic-feature classifier: mean imputation, standardization and an
L2-regularized logistic regression fit by full-batch gradient descent.

A slot is IoT when (1, x_hat) . theta > 0, where x_hat is the imputed and
standardized feature vector.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from capture.records import DeviceManifest, Label
from classifier.errors import AllMissing, ModelFormatError, SingleClass, WidthMismatch
from classifier.verdict import Prediction, Verdict
from features.extractor import FeatureId, SlotFeatureVector

logger = logging.getLogger(__name__)

MODEL_KIND = 'linear'
MODEL_VERSION = 1

DEFAULT_LAMBDA = 1.0
DEFAULT_MAX_ITER = 10000
DEFAULT_TOL = 1e-6
DEFAULT_SAMPLES_PER_DEVICE = 100


@dataclass(frozen=True)
class LabeledSlot:
    vector: SlotFeatureVector
    label: Label

    @property
    def device_key(self) -> str:
        return self.vector.device_key


def label_slots(vectors: Sequence[SlotFeatureVector], manifest: DeviceManifest) -> List[LabeledSlot]:
    """Attach manifest labels; vectors of devices outside the manifest are dropped."""
    known = manifest.by_mac
    labeled = [LabeledSlot(vector, known[vector.device_key].label) for vector in vectors if vector.device_key in known]
    dropped = len(vectors) - len(labeled)
    if dropped:
        logger.info('ignored %d slots of devices not in the manifest', dropped)
    return labeled


def feature_matrix(vectors: Sequence[SlotFeatureVector], features: Sequence[FeatureId]) -> np.ndarray:
    """Rows = slots, columns = features; missing values are NaN."""
    matrix = np.full((len(vectors), len(features)), np.nan, dtype=np.float64)
    for row, vector in enumerate(vectors):
        for column, feature in enumerate(features):
            value = vector.get(feature)
            if value is not None:
                matrix[row, column] = value
    return matrix


def label_vector(slots: Sequence[LabeledSlot]) -> np.ndarray:
    return np.array([slot.label.sign for slot in slots], dtype=np.float64)


def fit_defaults(train: Sequence[LabeledSlot], features: Sequence[FeatureId]) -> np.ndarray:
    """
    Imputation values: the mean of each feature's non-missing training values,
    both classes pooled.

    Raises:
        AllMissing if a feature has no value in any training slot
    """
    matrix = feature_matrix([slot.vector for slot in train], features)
    present = ~np.isnan(matrix)
    for column, feature in enumerate(features):
        if not present[:, column].any():
            raise AllMissing(feature)
    sums = np.where(present, matrix, 0.0).sum(axis=0)
    return sums / present.sum(axis=0)


def impute(matrix: np.ndarray, defaults: np.ndarray) -> np.ndarray:
    return np.where(np.isnan(matrix), defaults, matrix)


def fit_scaler(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Column means and population standard deviations; a zero deviation is
    replaced by 1.
    """
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise ValueError('cannot fit a scaler on an empty matrix')
    mu = matrix.mean(axis=0)
    sigma = matrix.std(axis=0)
    sigma[sigma == 0.0] = 1.0
    return mu, sigma


def standardize(matrix: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return (matrix - mu) / sigma


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def logistic_loss(theta: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float = DEFAULT_LAMBDA) -> float:
    """
    Mean log-loss plus (lam / 2n) * ||theta[1:]||^2.

    Args:
        theta: Intercept followed by one weight per column of X
        X: Standardized design matrix without intercept column
        y: +1 / -1 labels
    """
    n = X.shape[0]
    margins = y * (_with_intercept(X) @ theta)
    penalty = lam / (2.0 * n) * float(np.dot(theta[1:], theta[1:]))
    return float(np.mean(np.logaddexp(0.0, -margins))) + penalty


def logistic_gradient(theta: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    n = X.shape[0]
    Xb = _with_intercept(X)
    margins = y * (Xb @ theta)
    grad = -(Xb.T @ (y * expit(-margins))) / n
    grad[1:] += lam / n * theta[1:]
    return grad


def train_logreg(X: np.ndarray, y: np.ndarray, lam: float = DEFAULT_LAMBDA, max_iter: int = DEFAULT_MAX_ITER,
                 tol: float = DEFAULT_TOL,
                 callback: Optional[Callable[[int, np.ndarray], None]] = None) -> np.ndarray:
    """
    Fit theta by gradient descent from the origin.

    The step is 1/L with L = ||[1, X]||_2^2 / (4n) + lam/n, the Lipschitz
    constant of the gradient, so the loss never increases between iterations.

    Args:
        X: Standardized design matrix (n x d)
        y: +1 / -1 labels (length n)
        lam: L2 strength; the intercept is not penalized
        max_iter: Iteration cap
        tol: Stop once the largest absolute gradient component is below this
        callback: Called as callback(iteration, theta) before every step and
            once with the final theta

    Returns:
        theta of length d + 1, intercept first

    Raises:
        SingleClass if y holds only one class
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f'X has shape {X.shape} but y has {y.shape[0]} labels')
    if not ((y > 0).any() and (y < 0).any()):
        raise SingleClass('training data must contain both IoT and NoT slots')

    n = X.shape[0]
    lipschitz = 0.25 * np.linalg.norm(_with_intercept(X), 2) ** 2 / n + lam / n
    step = 1.0 / lipschitz
    theta = np.zeros(X.shape[1] + 1)

    iteration = 0
    for iteration in range(max_iter):
        if callback:
            callback(iteration, theta)
        grad = logistic_gradient(theta, X, y, lam)
        if np.max(np.abs(grad)) < tol:
            break
        theta = theta - step * grad
    else:
        logger.debug('logistic regression stopped at max_iter=%d', max_iter)
    if callback:
        callback(iteration + 1, theta)

    return theta


def balance_device_slots(slots: Sequence[LabeledSlot],
                         samples_per_device: int = DEFAULT_SAMPLES_PER_DEVICE) -> List[LabeledSlot]:
    """
    Cap each device at samples_per_device slots.

    A device with more slots is cut into bandwidth tertiles (low, medium, high)
    and an equal share is taken from each, at evenly spaced positions in
    slot_start order. Devices keep their first-appearance order; each device's
    slots come out sorted by slot_start.
    """
    by_device: Dict[str, List[LabeledSlot]] = defaultdict(list)
    for slot in slots:
        by_device[slot.device_key].append(slot)

    balanced = []
    for device_slots in by_device.values():
        if len(device_slots) <= samples_per_device:
            chosen = device_slots
        else:
            by_bandwidth = sorted(device_slots, key=lambda s: (s.vector.get(FeatureId.BANDWIDTH_BYTES) or 0.0,
                                                                s.vector.slot_start))
            quotas = [samples_per_device // 3 + (1 if i < samples_per_device % 3 else 0) for i in range(3)]
            chosen = []
            for tertile, quota in zip(np.array_split(np.arange(len(by_bandwidth)), 3), quotas):
                members = sorted((by_bandwidth[i] for i in tertile), key=lambda s: s.vector.slot_start)
                quota = min(quota, len(members))
                if quota == 0:
                    continue
                picks = np.round(np.linspace(0, len(members) - 1, quota)).astype(int)
                chosen.extend(members[i] for i in picks)
        balanced.extend(sorted(chosen, key=lambda s: s.vector.slot_start))
    return balanced


@dataclass(frozen=True)
class LinearModel:
    feature_ids: Tuple[FeatureId, ...]
    theta: Tuple[float, ...]
    mu: Tuple[float, ...]
    sigma: Tuple[float, ...]
    defaults: Tuple[float, ...]
    slot_width: float
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        d = len(self.feature_ids)
        if d == 0:
            raise ValueError('a linear model needs at least one feature')
        if not (len(self.theta) == d + 1 and len(self.mu) == len(self.sigma) == len(self.defaults) == d):
            raise ValueError(f'parameter lengths do not match {d} features')
        if any(not s > 0 for s in self.sigma):
            raise ValueError('every sigma must be > 0')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': MODEL_KIND,
            'version': MODEL_VERSION,
            'slot_width': self.slot_width,
            'features': [feature.value for feature in self.feature_ids],
            'theta': list(self.theta),
            'mu': list(self.mu),
            'sigma': list(self.sigma),
            'defaults': list(self.defaults),
            'meta': dict(self.meta),
        }

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> 'LinearModel':
        """
        Raises:
            ModelFormatError on missing keys, wrong kind/version or inconsistent lengths
            UnknownFeature on a feature name outside the known set
        """
        if obj.get('kind') != MODEL_KIND or obj.get('version') != MODEL_VERSION:
            raise ModelFormatError(f'not a linear model v{MODEL_VERSION}: kind={obj.get("kind")!r} '
                                   f'version={obj.get("version")!r}')
        try:
            features = tuple(FeatureId.parse(name) for name in obj['features'])
            return cls(
                feature_ids=features,
                theta=tuple(float(v) for v in obj['theta']),
                mu=tuple(float(v) for v in obj['mu']),
                sigma=tuple(float(v) for v in obj['sigma']),
                defaults=tuple(float(v) for v in obj['defaults']),
                slot_width=float(obj['slot_width']),
                meta=dict(obj.get('meta') or {}),
            )
        except KeyError as e:
            raise ModelFormatError(f'linear model is missing key {e}')
        except (TypeError, ValueError) as e:
            raise ModelFormatError(f'invalid linear model: {e}')


def train_linear_model(slots: Sequence[LabeledSlot], features: Sequence[FeatureId], slot_width: float,
                       lam: float = DEFAULT_LAMBDA, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
                       samples_per_device: int = DEFAULT_SAMPLES_PER_DEVICE,
                       seed: Optional[int] = None) -> LinearModel:
    """
    Balance, impute, standardize and fit.

    Args:
        slots: Labeled training slots, all of width slot_width
        features: Feature set, in model order
        slot_width: Slot width the model is trained for
        lam, max_iter, tol: Logistic regression settings
        samples_per_device: Per-device cap applied before fitting
        seed: Recorded in the model metadata only; training is deterministic

    Raises:
        WidthMismatch, SingleClass, AllMissing
    """
    features = tuple(features)
    if not features:
        raise ValueError('feature set is empty')
    for slot in slots:
        if slot.vector.width != slot_width:
            raise WidthMismatch(f'slot of width {slot.vector.width} given to a {slot_width}s model')

    train = balance_device_slots(slots, samples_per_device)
    y = label_vector(train)
    if not ((y > 0).any() and (y < 0).any()):
        raise SingleClass('training data must contain both IoT and NoT slots')

    defaults = fit_defaults(train, features)
    matrix = impute(feature_matrix([slot.vector for slot in train], features), defaults)
    mu, sigma = fit_scaler(matrix)
    theta = train_logreg(standardize(matrix, mu, sigma), y, lam=lam, max_iter=max_iter, tol=tol)

    logger.info('trained %ss model on %d slots (%d before balancing) with features %s',
                slot_width, len(train), len(slots), ', '.join(f.value for f in features))

    return LinearModel(
        feature_ids=features,
        theta=tuple(float(v) for v in theta),
        mu=tuple(float(v) for v in mu),
        sigma=tuple(float(v) for v in sigma),
        defaults=tuple(float(v) for v in defaults),
        slot_width=float(slot_width),
        meta={'seed': seed, 'n_train_slots': len(train), 'lambda': lam},
    )


def score(model: LinearModel, x: SlotFeatureVector) -> float:
    """Signed score of one slot; no width check."""
    raw = np.array([x.get(feature) if x.get(feature) is not None else default
                    for feature, default in zip(model.feature_ids, model.defaults)], dtype=np.float64)
    standardized = (raw - np.array(model.mu)) / np.array(model.sigma)
    theta = np.array(model.theta)
    return float(theta[0] + np.dot(theta[1:], standardized))


def predict(model: LinearModel, x: SlotFeatureVector) -> Prediction:
    """
    Classify one slot: IoT iff the score is > 0.

    Raises:
        WidthMismatch if x was computed over a different slot width
    """
    if x.width != model.slot_width:
        raise WidthMismatch(f'slot width {x.width:g}s does not match model width {model.slot_width:g}s')
    value = score(model, x)
    return Prediction(verdict=Verdict.from_score(value), score=value)


def predict_slots(model: LinearModel, vectors: Sequence[SlotFeatureVector]) -> List[Prediction]:
    return [predict(model, vector) for vector in vectors]
