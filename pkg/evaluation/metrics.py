"""
Confusion counts, recall/precision/F1 and per-device success rates.

IoT is the positive class. A ratio whose denominator is zero is undefined
and reported as None.
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from capture.records import Label
from classifier.verdict import Verdict


@dataclass(frozen=True)
class Confusion:
    tp: float = 0
    fp: float = 0
    tn: float = 0
    fn: float = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError('confusion counts must be non-negative')

    def __add__(self, other: 'Confusion') -> 'Confusion':
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, pairs: Iterable[Tuple[Label, Verdict]]) -> 'Confusion':
        """Count (truth, verdict) pairs; Abstain verdicts are skipped."""
        tp = fp = tn = fn = 0
        for truth, verdict in pairs:
            if verdict is Verdict.ABSTAIN:
                continue
            if truth is Label.IOT:
                if verdict is Verdict.IOT:
                    tp += 1
                else:
                    fn += 1
            elif verdict is Verdict.IOT:
                fp += 1
            else:
                tn += 1
        return cls(tp=tp, fp=fp, tn=tn, fn=fn)

    def to_dict(self) -> Dict[str, float]:
        return {'tp': self.tp, 'fp': self.fp, 'tn': self.tn, 'fn': self.fn}


@dataclass(frozen=True)
class Metrics:
    recall: Optional[float]
    precision: Optional[float]
    f1: Optional[float]

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {'recall': self.recall, 'precision': self.precision, 'f1': self.f1}


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    return numerator / denominator if denominator else None


def compute_metrics(c: Confusion) -> Metrics:
    """
    Recall TP/(TP+FN), precision TP/(TP+FP) and their harmonic mean. F1 is
    undefined when either ratio is, or when both are 0.

    >>> m = compute_metrics(Confusion(tp=10))
    >>> (m.recall, m.precision, m.f1)
    (1.0, 1.0, 1.0)
    >>> compute_metrics(Confusion()).f1 is None
    True
    """
    recall = _ratio(c.tp, c.tp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    if recall is None or precision is None:
        f1 = None
    else:
        f1 = _ratio(2 * recall * precision, recall + precision)
    return Metrics(recall=recall, precision=precision, f1=f1)


@dataclass(frozen=True)
class DeviceSuccess:
    label: Label
    correct: int
    total: int
    abstained: int

    @property
    def rate(self) -> Optional[float]:
        """Fraction of non-abstained predictions that were correct."""
        return self.correct / self.total if self.total else None

    @property
    def coverage(self) -> float:
        """Fraction of predictions that were not Abstain."""
        seen = self.total + self.abstained
        return self.total / seen if seen else 0.0

    def to_dict(self) -> Dict:
        return {
            'label': self.label.value,
            'rate': self.rate,
            'coverage': self.coverage,
            'correct': self.correct,
            'total': self.total,
            'abstained': self.abstained,
        }


def per_device_success(predictions: Sequence[Tuple[str, Label, Verdict]]) -> Dict[str, DeviceSuccess]:
    """
    Success rate per device, in first-appearance order.

    Raises:
        ValueError on an empty prediction list
    """
    if not predictions:
        raise ValueError('no predictions to aggregate')
    counts: Dict[str, List] = OrderedDict()
    for device, truth, verdict in predictions:
        entry = counts.setdefault(device, [truth, 0, 0, 0])
        if verdict is Verdict.ABSTAIN:
            entry[3] += 1
        else:
            entry[2] += 1
            if verdict.matches(truth):
                entry[1] += 1
    return OrderedDict(
        (device, DeviceSuccess(label=label, correct=correct, total=total, abstained=abstained))
        for device, (label, correct, total, abstained) in counts.items()
    )


def success_cdf(success: Dict[str, DeviceSuccess]) -> List[Tuple[float, float]]:
    """
    Empirical CDF of device success rates: (rate, fraction of devices with
    rate <= it) for each distinct rate. Devices without a rate are left out.

    >>> success_cdf({'a': DeviceSuccess(Label.IOT, 1, 2, 0), 'b': DeviceSuccess(Label.NOT, 3, 3, 0)})
    [(0.5, 0.5), (1.0, 1.0)]
    """
    rates = sorted(entry.rate for entry in success.values() if entry.rate is not None)
    points = []
    for index, rate in enumerate(rates):
        fraction = (index + 1) / len(rates)
        if points and points[-1][0] == rate:
            points[-1] = (rate, fraction)
        else:
            points.append((rate, fraction))
    return points


def device_averaged_confusion(success: Dict[str, DeviceSuccess]) -> Confusion:
    """
    Each device counts once: an IoT device adds its rate to TP and the rest
    to FN, a NoT device adds its rate to TN and the rest to FP.
    """
    total = Confusion()
    for entry in success.values():
        if entry.rate is None:
            continue
        if entry.label is Label.IOT:
            total = total + Confusion(tp=entry.rate, fn=1.0 - entry.rate)
        else:
            total = total + Confusion(tn=entry.rate, fp=1.0 - entry.rate)
    return total
