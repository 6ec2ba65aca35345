"""Turn capture files into per-device traces."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence

from tqdm import tqdm

from capture.decoder import decode_frame
from capture.demux import demux_by_device, group_records
from capture.event_log import parse_event_log
from capture.pcap_reader import parse_pcap
from capture.records import DeviceManifest, DeviceTrace, Frame

logger = logging.getLogger(__name__)


def read_pcap_frames(path: str) -> List[Frame]:
    """Decode every frame of one pcap file (undecodable runts are skipped)."""
    frames = []
    skipped = 0
    with open(path, 'rb') as f:
        for raw in parse_pcap(f):
            frame = decode_frame(raw.data, raw.timestamp, raw.wire_len)
            if frame is None:
                skipped += 1
                continue
            frames.append(frame)
    if skipped:
        logger.warning('%s: skipped %d frames shorter than an Ethernet header', path, skipped)
    logger.info('%s: decoded %d frames', path, len(frames))
    return frames


def load_pcap_traces(paths: Sequence[str], manifest: DeviceManifest, max_workers: int = 4,
                     progress: bool = True) -> List[DeviceTrace]:
    """
    Parse pcap files concurrently and demultiplex the frames per device.

    Args:
        paths: Capture files
        manifest: Devices to keep
        max_workers: Thread pool size for parsing
        progress: Show a tqdm bar
    """
    frames: List[Frame] = []
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        results = executor.map(read_pcap_frames, paths)
        for file_frames in tqdm(results, total=len(paths), desc='Reading captures', unit='file', disable=not progress):
            frames.extend(file_frames)
    return demux_by_device(frames, manifest)


def load_event_traces(path: str, manifest: DeviceManifest) -> List[DeviceTrace]:
    """Parse an event log file and group its records per device."""
    with open(path, 'r', encoding='utf-8') as f:
        records = list(parse_event_log(f))
    logger.info('%s: parsed %d records', path, len(records))
    return group_records(records, manifest)
