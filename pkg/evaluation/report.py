"""
Evaluation reports built from verdict lines.

A report carries pooled metrics (every slot/window counted once) and
device-averaged metrics (every device counted once), the per-device
success rates and their CDF.
"""

import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Sequence, TextIO, Tuple

import pandas as pd

from capture.event_log import SchemaError
from capture.records import DeviceManifest, Label
from classifier.verdict import Verdict
from evaluation.metrics import (
    Confusion,
    DeviceSuccess,
    Metrics,
    compute_metrics,
    device_averaged_confusion,
    per_device_success,
    success_cdf,
)
from utils.errors import DataError

logger = logging.getLogger(__name__)

Prediction = Tuple[str, Label, Verdict]


class NoPredictions(DataError):
    """No verdict line matched a manifest device."""


@dataclass(frozen=True)
class EvaluationReport:
    confusion: Confusion
    metrics: Metrics
    device_confusion: Confusion
    device_metrics: Metrics
    per_device: Dict[str, DeviceSuccess]
    cdf_points: List[Tuple[float, float]]
    abstained: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'pooled': {'confusion': self.confusion.to_dict(), **self.metrics.to_dict()},
            'device_averaged': {'confusion': self.device_confusion.to_dict(), **self.device_metrics.to_dict()},
            'abstained': self.abstained,
            'per_device': {device: entry.to_dict() for device, entry in self.per_device.items()},
            'cdf': [[rate, fraction] for rate, fraction in self.cdf_points],
        }


def build_report(predictions: Sequence[Prediction]) -> EvaluationReport:
    """
    Raises:
        NoPredictions on an empty prediction list
    """
    if not predictions:
        raise NoPredictions('no predictions to evaluate')
    confusion = Confusion.from_predictions((truth, verdict) for _, truth, verdict in predictions)
    per_device = per_device_success(predictions)
    device_confusion = device_averaged_confusion(per_device)
    return EvaluationReport(
        confusion=confusion,
        metrics=compute_metrics(confusion),
        device_confusion=device_confusion,
        device_metrics=compute_metrics(device_confusion),
        per_device=per_device,
        cdf_points=success_cdf(per_device),
        abstained=sum(1 for _, _, verdict in predictions if verdict is Verdict.ABSTAIN),
    )


def read_verdicts(lines: Iterable[str]) -> List[Tuple[str, Verdict]]:
    """
    Parse verdict JSON lines into (device, verdict) pairs.

    Raises:
        SchemaError on malformed lines
    """
    pairs = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            pairs.append((str(obj['device']), Verdict(obj['verdict'])))
        except json.JSONDecodeError as e:
            raise SchemaError(line_no, f'invalid JSON: {e.msg}')
        except (KeyError, TypeError):
            raise SchemaError(line_no, 'verdict line needs "device" and "verdict"')
        except ValueError:
            raise SchemaError(line_no, f'unknown verdict {obj.get("verdict")!r}')
    return pairs


def attach_truth(pairs: Iterable[Tuple[str, Verdict]], manifest: DeviceManifest) -> List[Prediction]:
    """Pair verdicts with manifest labels; devices outside the manifest are skipped."""
    known = manifest.by_mac
    predictions = [(device, known[device].label, verdict) for device, verdict in pairs if device in known]
    return predictions


def write_report(report: EvaluationReport, out: TextIO):
    json.dump(report.to_dict(), out, indent=2)
    out.write('\n')


def write_cdf_csv(report: EvaluationReport, path):
    frame = pd.DataFrame(report.cdf_points, columns=['success_rate', 'fraction_of_devices'])
    frame.to_csv(path, index=False, float_format='%.17g')
