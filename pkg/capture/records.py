"""Packet records, device manifests and per-device traces."""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from utils.errors import DataError
from utils.protocol_mappings import DHCP_PORTS, DNS_PORT

TRANSPORT_TCP = 'TCP'
TRANSPORT_UDP = 'UDP'

# 'TCP', 'UDP', or the raw IP protocol number for anything else
Transport = Union[str, int]


class Direction(str, Enum):
    OUTGOING = 'Outgoing'
    INCOMING = 'Incoming'


class Label(str, Enum):
    IOT = 'IoT'
    NOT = 'NoT'

    @property
    def sign(self) -> int:
        """+1 for IoT (positive class), -1 for NoT."""
        return 1 if self is Label.IOT else -1

    @classmethod
    def parse(cls, text: str) -> 'Label':
        """Case-insensitive parse of 'IoT' / 'NoT'."""
        folded = str(text).strip().lower()
        for label in cls:
            if label.value.lower() == folded:
                return label
        raise ValueError(f'label must be IoT or NoT, got {text!r}')


class Split(str, Enum):
    SEEN = 'seen'
    UNSEEN = 'unseen'


@dataclass(frozen=True)
class IpInfo:
    version: int
    ttl: int
    header_len: int
    src_addr: str
    dst_addr: str
    transport: Transport


@dataclass(frozen=True)
class TcpInfo:
    src_port: int
    dst_port: int
    window_size: int
    ts_val: Optional[int] = None


@dataclass(frozen=True)
class UdpInfo:
    src_port: int
    dst_port: int


@dataclass(frozen=True)
class DnsInfo:
    is_query: bool
    qnames: Tuple[str, ...] = ()


@dataclass(frozen=True)
class DhcpInfo:
    hostname: Optional[str] = None
    vci: Optional[str] = None
    prl: Optional[Tuple[int, ...]] = None
    max_size: Optional[int] = None
    message_type: Optional[int] = None


@dataclass(frozen=True)
class HttpUaInfo:
    length: int


@dataclass(frozen=True)
class PacketRecord:
    """One parsed packet, already attributed to a LAN device."""

    timestamp: float
    device_key: str
    direction: Direction
    frame_len: int
    ip: Optional[IpInfo] = None
    tcp: Optional[TcpInfo] = None
    udp: Optional[UdpInfo] = None
    dns: Optional[DnsInfo] = None
    dhcp: Optional[DhcpInfo] = None
    http_ua: Optional[HttpUaInfo] = None

    @property
    def is_outgoing(self) -> bool:
        return self.direction is Direction.OUTGOING


@dataclass(frozen=True)
class Frame:
    """
    A decoded Ethernet frame before it is attributed to a device.

    Carries the link-layer addresses demux needs; the protocol fields are the
    same ones a PacketRecord holds.
    """

    timestamp: float
    src_mac: str
    dst_mac: str
    frame_len: int
    ip: Optional[IpInfo] = None
    tcp: Optional[TcpInfo] = None
    udp: Optional[UdpInfo] = None
    dns: Optional[DnsInfo] = None
    dhcp: Optional[DhcpInfo] = None
    http_ua: Optional[HttpUaInfo] = None

    def to_record(self, device_key: str, direction: Direction) -> PacketRecord:
        return PacketRecord(
            timestamp=self.timestamp,
            device_key=device_key,
            direction=direction,
            frame_len=self.frame_len,
            ip=self.ip,
            tcp=self.tcp,
            udp=self.udp,
            dns=self.dns,
            dhcp=self.dhcp,
            http_ua=self.http_ua,
        )


def presence_violations(record) -> List[str]:
    """
    Check the protocol-presence rules of a PacketRecord or Frame.

    Returns:
        Human-readable descriptions of every broken rule (empty when valid)
    """
    problems = []
    if record.tcp is not None and record.udp is not None:
        problems.append('tcp and udp both present')
    if record.dns is not None:
        if record.udp is None or DNS_PORT not in (record.udp.src_port, record.udp.dst_port):
            problems.append('dns present without udp port 53')
    if record.dhcp is not None:
        if record.udp is None or {record.udp.src_port, record.udp.dst_port} != DHCP_PORTS:
            problems.append('dhcp present without udp ports 67/68')
    return problems


@dataclass(frozen=True)
class ManifestEntry:
    mac: str
    name: str
    label: Label
    split: Split = Split.SEEN


class ManifestError(DataError):
    """Manifest CSV is malformed."""


class EmptyManifest(DataError):
    """The manifest lists no devices."""


@dataclass(frozen=True)
class DeviceManifest:
    entries: Tuple[ManifestEntry, ...]

    def __post_init__(self):
        macs = [entry.mac for entry in self.entries]
        if len(set(macs)) != len(macs):
            duplicates = sorted({mac for mac in macs if macs.count(mac) > 1})
            raise ManifestError(f'duplicate MACs in manifest: {", ".join(duplicates)}')

    @property
    def by_mac(self) -> Dict[str, ManifestEntry]:
        return {entry.mac: entry for entry in self.entries}

    def label_of(self, mac: str) -> Label:
        return self.by_mac[mac].label

    def restricted(self, split: Optional[str]) -> 'DeviceManifest':
        """
        Keep only devices of one split.

        Args:
            split: 'seen', 'unseen', or None/'all' for every device
        """
        if split in (None, 'all'):
            return self
        wanted = Split(split)
        return replace(self, entries=tuple(e for e in self.entries if e.split is wanted))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class DeviceTrace:
    """Time-ordered records of one device."""

    device_key: str
    label: Label
    records: Tuple[PacketRecord, ...]
