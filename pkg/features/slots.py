"""Fixed-width time slots over a device trace."""

import math
from dataclasses import dataclass
from itertools import groupby
from typing import List, Optional, Sequence, Tuple

from capture.records import DeviceTrace, PacketRecord

# 1, 5, 10 and 20 minutes
DEFAULT_SLOT_WIDTHS = (60, 300, 600, 1200)


@dataclass(frozen=True)
class SlotConfig:
    """
    Slot width in seconds and an optional origin.

    When origin is None the first timestamp is floored to a multiple of width
    (epoch-aligned slots).
    """

    width: float
    origin: Optional[float] = None

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f'slot width must be > 0, got {self.width}')

    def origin_for(self, first_timestamp: float) -> float:
        if self.origin is not None:
            return self.origin
        return math.floor(first_timestamp / self.width) * self.width

    def slot_index(self, timestamp: float, origin: float) -> int:
        return math.floor((timestamp - origin) / self.width)


def slice_records(records: Sequence[PacketRecord], cfg: SlotConfig) -> List[Tuple[float, List[PacketRecord]]]:
    """
    Bucket time-sorted records into slots; empty slots are omitted.

    Returns:
        (slot_start, records) pairs in time order
    """
    if not records:
        return []
    origin = cfg.origin_for(records[0].timestamp)
    slots = []
    for index, members in groupby(records, key=lambda record: cfg.slot_index(record.timestamp, origin)):
        slots.append((origin + index * cfg.width, list(members)))
    return slots


def slice_slots(trace: DeviceTrace, cfg: SlotConfig) -> List[Tuple[float, List[PacketRecord]]]:
    """Slot a device trace (records must already be sorted by timestamp)."""
    return slice_records(trace.records, cfg)
