"""
Per-slot traffic features.

All IP/TCP statistics are taken over the device's Outgoing records; only the
remote-peer counts (remote IPs and remote endpoints) look at both directions.
A feature whose underlying record set is empty is missing (None), except the
DNS counts, which are 0 when the slot carries outgoing transport traffic but
no DNS query.
"""

import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

from capture.records import DeviceTrace, PacketRecord
from features.slots import SlotConfig, slice_slots
from features.tcpts import TcpTsSample, tcpts_lls_error
from utils.errors import DataError


class UnknownFeature(DataError):
    """A feature name outside the 22 known traffic features."""


class FeatureId(str, Enum):
    PKT_COUNT = 'pkt_count'
    BANDWIDTH_BYTES = 'bandwidth_bytes'
    AVG_PKT_LEN = 'avg_pkt_len'
    AVG_INTERLEAVE = 'avg_interleave'
    STD_INTERLEAVE = 'std_interleave'
    N_REMOTE_IPS = 'n_remote_ips'
    AVG_TTL = 'avg_ttl'
    AVG_IP_HDR_LEN = 'avg_ip_hdr_len'
    MAX_IP_HDR_LEN = 'max_ip_hdr_len'
    MIN_IP_HDR_LEN = 'min_ip_hdr_len'
    N_UNIQUE_IP_HDR_LEN = 'n_unique_ip_hdr_len'
    N_PORTS = 'n_ports'
    TCP_UDP_RATIO = 'tcp_udp_ratio'
    N_REMOTE_ENDPOINTS = 'n_remote_endpoints'
    MAX_TCP_WINDOW = 'max_tcp_window'
    MEAN_TCP_WINDOW = 'mean_tcp_window'
    MIN_TCP_WINDOW = 'min_tcp_window'
    N_UNIQUE_TCP_WINDOW = 'n_unique_tcp_window'
    TCPTS_LLS_ERROR = 'tcpts_lls_error'
    N_UNIQUE_DNS = 'n_unique_dns'
    N_DNS = 'n_dns'
    AVG_UA_LEN = 'avg_ua_len'

    @classmethod
    def parse(cls, name: str) -> 'FeatureId':
        try:
            return cls(name.strip())
        except ValueError:
            raise UnknownFeature(f'unknown feature {name!r}')


# Canonical order; also the tie-break order of feature selection
ALL_FEATURES = tuple(FeatureId)


@dataclass(frozen=True)
class SlotFeatureVector:
    device_key: str
    slot_start: float
    width: float
    features: Dict[FeatureId, Optional[float]] = field(default_factory=dict)

    def get(self, feature: FeatureId) -> Optional[float]:
        return self.features.get(feature)


def _mean(values: Sequence[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def _peer(record: PacketRecord):
    """(peer address, peer port or None) as seen from the device."""
    ip = record.ip
    transport = record.tcp or record.udp
    if record.is_outgoing:
        return ip.dst_addr, transport.dst_port if transport else None
    return ip.src_addr, transport.src_port if transport else None


def extract_features(records: Sequence[PacketRecord], device_key: str, slot_start: float = 0.0,
                     width: float = 0.0) -> SlotFeatureVector:
    """
    Compute the 22 raw features of one slot.

    Args:
        records: The slot's records (any order; all for device_key)
        device_key: Device MAC
        slot_start: Slot start, copied into the vector
        width: Slot width, copied into the vector
    """
    ordered = sorted(records, key=lambda record: record.timestamp)
    outgoing = [record for record in ordered if record.is_outgoing]
    values: Dict[FeatureId, Optional[float]] = {feature: None for feature in FeatureId}

    # Link layer
    if outgoing:
        bandwidth = sum(record.frame_len for record in outgoing)
        values[FeatureId.PKT_COUNT] = len(outgoing)
        values[FeatureId.BANDWIDTH_BYTES] = bandwidth
        values[FeatureId.AVG_PKT_LEN] = bandwidth / len(outgoing)
    if len(outgoing) >= 2:
        gaps = [b.timestamp - a.timestamp for a, b in zip(outgoing, outgoing[1:])]
        values[FeatureId.AVG_INTERLEAVE] = _mean(gaps)
        values[FeatureId.STD_INTERLEAVE] = statistics.pstdev(gaps)

    # IP
    out_ip = [record.ip for record in outgoing if record.ip is not None]
    if out_ip:
        header_lens = [ip.header_len for ip in out_ip]
        values[FeatureId.AVG_TTL] = _mean([ip.ttl for ip in out_ip])
        values[FeatureId.AVG_IP_HDR_LEN] = _mean(header_lens)
        values[FeatureId.MAX_IP_HDR_LEN] = max(header_lens)
        values[FeatureId.MIN_IP_HDR_LEN] = min(header_lens)
        values[FeatureId.N_UNIQUE_IP_HDR_LEN] = len(set(header_lens))

    peers = [_peer(record) for record in ordered if record.ip is not None]
    if peers:
        values[FeatureId.N_REMOTE_IPS] = len({address for address, _ in peers})
    endpoints = {(address, port) for address, port in peers if port is not None}
    if endpoints:
        values[FeatureId.N_REMOTE_ENDPOINTS] = len(endpoints)

    # Transport
    out_tcp = [record.tcp for record in outgoing if record.tcp is not None]
    out_udp = [record.udp for record in outgoing if record.udp is not None]
    if out_tcp or out_udp:
        values[FeatureId.N_PORTS] = len({segment.src_port for segment in out_tcp + out_udp})
        values[FeatureId.TCP_UDP_RATIO] = (len(out_tcp) + 1) / (len(out_udp) + 1)

    if out_tcp:
        windows = [segment.window_size for segment in out_tcp]
        values[FeatureId.MAX_TCP_WINDOW] = max(windows)
        values[FeatureId.MEAN_TCP_WINDOW] = _mean(windows)
        values[FeatureId.MIN_TCP_WINDOW] = min(windows)
        values[FeatureId.N_UNIQUE_TCP_WINDOW] = len(set(windows))

    samples = [
        TcpTsSample(t=record.timestamp, v=record.tcp.ts_val)
        for record in outgoing
        if record.tcp is not None and record.tcp.ts_val is not None
    ]
    values[FeatureId.TCPTS_LLS_ERROR] = tcpts_lls_error(samples)

    # DNS: no query in a slot with TCP/UDP traffic, either direction, is itself a zero reading
    queries = [record.dns for record in outgoing if record.dns is not None and record.dns.is_query]
    if queries or any(record.tcp is not None or record.udp is not None for record in ordered):
        values[FeatureId.N_DNS] = len(queries)
        values[FeatureId.N_UNIQUE_DNS] = len({name.lower() for dns in queries for name in dns.qnames})

    # HTTP
    values[FeatureId.AVG_UA_LEN] = _mean([record.http_ua.length for record in outgoing if record.http_ua is not None])

    return SlotFeatureVector(device_key=device_key, slot_start=slot_start, width=width, features=values)


def extract_trace_features(trace: DeviceTrace, cfg: SlotConfig) -> List[SlotFeatureVector]:
    """Feature vector of every nonempty slot of a trace."""
    return [
        extract_features(records, trace.device_key, slot_start=slot_start, width=cfg.width)
        for slot_start, records in slice_slots(trace, cfg)
    ]
