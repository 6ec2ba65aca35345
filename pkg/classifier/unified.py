"""
Unified classifier: a weighted majority vote over one 20-minute window.

The window is tiled into four 5-minute, two 10-minute and one 20-minute
slot, each classified by the traffic model of its width, and the DHCP
tree votes with weight 2. An empty tile or a device without DHCP abstains.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from capture.records import DeviceTrace, PacketRecord
from classifier.dhcp_tree import DhcpSignatureModel, device_labels, predict_tree
from classifier.errors import ModelWidthMismatch
from classifier.linear import LinearModel, predict
from classifier.verdict import Verdict
from features.extractor import extract_features
from features.slots import SlotConfig, slice_slots

logger = logging.getLogger(__name__)

DHCP_VOTER = 'dhcp'


@dataclass(frozen=True)
class UnifiedConfig:
    window: float = 1200
    sub_widths: Tuple[float, ...] = (300, 600, 1200)
    dhcp_weight: int = 2

    def __post_init__(self):
        if self.dhcp_weight < 1:
            raise ValueError(f'dhcp_weight must be >= 1, got {self.dhcp_weight}')
        if self.window not in self.sub_widths:
            raise ValueError('sub_widths must include the full window')
        for width in self.sub_widths:
            if width <= 0 or self.window % width:
                raise ValueError(f'sub-slot width {width} does not tile a {self.window}s window')

    def tiles(self, window_start: float) -> List[Tuple[str, float, float]]:
        """(voter id, start, width) of every sub-slot, narrowest widths first."""
        tiles = []
        for width in sorted(self.sub_widths):
            for index in range(int(self.window // width)):
                tiles.append((voter_id(width, index), window_start + index * width, width))
        return tiles


def voter_id(width: float, index: int) -> str:
    return f'{width:g}s#{index}'


@dataclass(frozen=True)
class Vote:
    voter: str
    verdict: Verdict
    weight: int

    def to_dict(self) -> Dict[str, Any]:
        return {'voter': self.voter, 'verdict': self.verdict.value, 'weight': self.weight}


@dataclass(frozen=True)
class VoteRecord:
    device: str
    window_start: float
    votes: Tuple[Vote, ...]
    iot_weight: int
    not_weight: int
    verdict: Verdict

    def to_dict(self) -> Dict[str, Any]:
        return {
            'device': self.device,
            'window_start': self.window_start,
            'votes': [vote.to_dict() for vote in self.votes],
            'verdict': self.verdict.value,
        }


def tally(votes: Sequence[Vote]) -> Tuple[int, int]:
    """Weighted (IoT, NoT) totals; abstentions count for neither side."""
    iot = sum(vote.weight for vote in votes if vote.verdict is Verdict.IOT)
    not_iot = sum(vote.weight for vote in votes if vote.verdict is Verdict.NOT)
    return iot, not_iot


def combine_votes(votes: Sequence[Vote], decider: str) -> Verdict:
    """
    Weighted majority. The decider (the full-window voter) settles ties, and
    when the decider itself abstains the result is Abstain.
    """
    by_voter = {vote.voter: vote for vote in votes}
    deciding = by_voter.get(decider)
    if deciding is None or deciding.verdict is Verdict.ABSTAIN:
        return Verdict.ABSTAIN
    iot, not_iot = tally(votes)
    if iot > not_iot:
        return Verdict.IOT
    if not_iot > iot:
        return Verdict.NOT
    return deciding.verdict


def check_models(models: Mapping[float, LinearModel], cfg: UnifiedConfig):
    """
    Raises:
        ModelWidthMismatch unless every sub-slot width has a model of that width
    """
    for width in cfg.sub_widths:
        model = models.get(width)
        if model is None:
            raise ModelWidthMismatch(f'no traffic model for {width:g}s sub-slots')
        if model.slot_width != width:
            raise ModelWidthMismatch(f'model registered for {width:g}s was trained at {model.slot_width:g}s')


def unified_predict(records: Sequence[PacketRecord], device_key: str, window_start: float,
                    models: Mapping[float, LinearModel], dhcp_model: Optional[DhcpSignatureModel] = None,
                    dhcp_labels: Optional[frozenset] = None, cfg: UnifiedConfig = UnifiedConfig()) -> VoteRecord:
    """
    Vote on one device window.

    Args:
        records: The device's records (any subset covering the window)
        device_key: Device MAC
        window_start: Window start; the window spans cfg.window seconds
        models: Traffic model per sub-slot width
        dhcp_model: DHCP tree, or None for no DHCP voter
        dhcp_labels: The device's DHCP labels accumulated up to window end,
            or None when it has sent no DHCP yet
        cfg: Window layout and DHCP weight

    Raises:
        ModelWidthMismatch
    """
    check_models(models, cfg)

    votes = []
    for voter, start, width in cfg.tiles(window_start):
        tile = [record for record in records if start <= record.timestamp < start + width]
        if not tile:
            votes.append(Vote(voter, Verdict.ABSTAIN, 0))
            continue
        vector = extract_features(tile, device_key, slot_start=start, width=width)
        votes.append(Vote(voter, predict(models[width], vector).verdict, 1))

    if dhcp_model is not None and dhcp_labels is not None:
        votes.append(Vote(DHCP_VOTER, predict_tree(dhcp_model, dhcp_labels), cfg.dhcp_weight))
    else:
        votes.append(Vote(DHCP_VOTER, Verdict.ABSTAIN, 0))

    iot, not_iot = tally(votes)
    verdict = combine_votes(votes, decider=voter_id(cfg.window, 0))
    return VoteRecord(device=device_key, window_start=window_start, votes=tuple(votes), iot_weight=iot,
                      not_weight=not_iot, verdict=verdict)


def unified_predict_trace(trace: DeviceTrace, models: Mapping[float, LinearModel],
                          dhcp_model: Optional[DhcpSignatureModel] = None,
                          cfg: UnifiedConfig = UnifiedConfig()) -> List[VoteRecord]:
    """One VoteRecord per nonempty window-aligned window of the trace."""
    check_models(models, cfg)
    results = []
    for window_start, records in slice_slots(trace, SlotConfig(width=cfg.window)):
        labels = None
        if dhcp_model is not None:
            labels = device_labels(trace, until=window_start + cfg.window, delimiters=dhcp_model.delimiters)
        results.append(unified_predict(records, trace.device_key, window_start, models, dhcp_model, labels, cfg))
    abstained = sum(1 for result in results if result.verdict is Verdict.ABSTAIN)
    if abstained:
        logger.info('%s: %d of %d windows abstained', trace.device_key, abstained, len(results))
    return results
