"""Attribute frames and records to manifest devices."""

import logging
from collections import defaultdict
from typing import Dict, Iterable, List

from capture.records import DeviceManifest, DeviceTrace, Direction, EmptyManifest, Frame, PacketRecord

logger = logging.getLogger(__name__)


def _build_traces(by_device: Dict[str, List[PacketRecord]], manifest: DeviceManifest) -> List[DeviceTrace]:
    traces = []
    for entry in manifest.entries:
        records = by_device.get(entry.mac)
        if not records:
            continue
        records.sort(key=lambda record: record.timestamp)
        traces.append(DeviceTrace(device_key=entry.mac, label=entry.label, records=tuple(records)))
    return traces


def demux_by_device(frames: Iterable[Frame], manifest: DeviceManifest) -> List[DeviceTrace]:
    """
    Split decoded frames into per-device traces by MAC.

    A frame is Outgoing for the device owning its source MAC and Incoming for
    the device owning its destination MAC; a frame between two manifest
    devices therefore yields two records.

    Returns:
        One trace per manifest device that has records, in manifest order

    Raises:
        EmptyManifest
    """
    if len(manifest) == 0:
        raise EmptyManifest('manifest lists no devices')

    known = manifest.by_mac
    by_device: Dict[str, List[PacketRecord]] = defaultdict(list)
    dropped = 0

    for frame in frames:
        touched = False
        if frame.src_mac in known:
            by_device[frame.src_mac].append(frame.to_record(frame.src_mac, Direction.OUTGOING))
            touched = True
        if frame.dst_mac in known and frame.dst_mac != frame.src_mac:
            by_device[frame.dst_mac].append(frame.to_record(frame.dst_mac, Direction.INCOMING))
            touched = True
        if not touched:
            dropped += 1

    if dropped:
        logger.info('dropped %d frames touching no manifest device', dropped)
    return _build_traces(by_device, manifest)


def group_records(records: Iterable[PacketRecord], manifest: DeviceManifest) -> List[DeviceTrace]:
    """
    Group already-attributed records (event log input) per manifest device.

    Raises:
        EmptyManifest
    """
    if len(manifest) == 0:
        raise EmptyManifest('manifest lists no devices')

    known = manifest.by_mac
    by_device: Dict[str, List[PacketRecord]] = defaultdict(list)
    dropped = 0

    for record in records:
        if record.device_key in known:
            by_device[record.device_key].append(record)
        else:
            dropped += 1

    if dropped:
        logger.info('dropped %d records of devices not in the manifest', dropped)
    return _build_traces(by_device, manifest)
