"""Classifier verdicts."""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from capture.records import Label


class Verdict(str, Enum):
    IOT = 'IoT'
    NOT = 'NoT'
    ABSTAIN = 'Abstain'

    @classmethod
    def from_label(cls, label: Label) -> 'Verdict':
        return cls.IOT if label is Label.IOT else cls.NOT

    @classmethod
    def from_score(cls, score: float) -> 'Verdict':
        # A score of exactly 0 is NoT
        return cls.IOT if score > 0 else cls.NOT

    def matches(self, label: Label) -> bool:
        return self.value == label.value


@dataclass(frozen=True)
class Prediction:
    verdict: Verdict
    score: Optional[float] = None
