"""Classic (libpcap) capture file reader."""

import io
import logging
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, Union

from utils.errors import DataError
from utils.protocol_mappings import LINKTYPE_ETHERNET, PCAP_MAGIC_TO_FORMAT

logger = logging.getLogger(__name__)

PCAP_GLOBAL_HEADER_FORMAT = 'IHHiIII'
PCAP_GLOBAL_HEADER_LEN = 24
PCAP_PACKET_HEADER_FORMAT = 'IIII'
PCAP_PACKET_HEADER_LEN = 16

# Upper bits of the network field carry FCS metadata
LINKTYPE_MASK = 0x03FFFFFF


class BadMagic(DataError):
    """Input does not start with a known pcap magic number."""


class UnsupportedLinkType(DataError):
    """Capture link type is not Ethernet."""


class TruncatedHeader(DataError):
    """Global or per-record header is cut short."""


class TruncatedRecord(DataError):
    """Record holds fewer bytes than its declared caplen."""


@dataclass(frozen=True)
class RawFrame:
    timestamp: float
    data: bytes
    wire_len: int


def _to_seconds(sec: int, frac: int, nanoseconds: bool) -> float:
    if nanoseconds:
        # round half-up to microseconds
        usec = (frac + 500) // 1000
    else:
        usec = frac
    if usec >= 1_000_000:
        sec += usec // 1_000_000
        usec %= 1_000_000
    return sec + usec / 1_000_000


def parse_pcap(source: Union[bytes, BinaryIO]) -> Iterator[RawFrame]:
    """
    Stream the frames of a classic pcap capture.

    Args:
        source: Raw capture bytes or a binary file object

    Yields:
        RawFrame per record header, in file order

    Raises:
        BadMagic, UnsupportedLinkType, TruncatedHeader, TruncatedRecord
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        source = io.BytesIO(bytes(source))

    magic_bytes = source.read(4)
    if len(magic_bytes) < 4:
        raise TruncatedHeader(f'pcap global header needs {PCAP_GLOBAL_HEADER_LEN} bytes, got {len(magic_bytes)}')

    magic = struct.unpack('<I', magic_bytes)[0]
    if magic not in PCAP_MAGIC_TO_FORMAT:
        raise BadMagic(f'unknown pcap magic 0x{magic:08x}')
    byte_order, nanoseconds = PCAP_MAGIC_TO_FORMAT[magic]

    rest = source.read(PCAP_GLOBAL_HEADER_LEN - 4)
    if len(rest) < PCAP_GLOBAL_HEADER_LEN - 4:
        raise TruncatedHeader(f'pcap global header needs {PCAP_GLOBAL_HEADER_LEN} bytes, got {4 + len(rest)}')

    _, _, _, _, _, _, network = struct.unpack(byte_order + PCAP_GLOBAL_HEADER_FORMAT, magic_bytes + rest)
    link_type = network & LINKTYPE_MASK
    if link_type != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f'link type {link_type} is not Ethernet (1)')

    record_format = byte_order + PCAP_PACKET_HEADER_FORMAT
    index = 0
    while True:
        header = source.read(PCAP_PACKET_HEADER_LEN)
        if not header:
            break
        if len(header) < PCAP_PACKET_HEADER_LEN:
            raise TruncatedHeader(f'record {index}: header has {len(header)} of {PCAP_PACKET_HEADER_LEN} bytes')

        ts_sec, ts_frac, incl_len, orig_len = struct.unpack(record_format, header)
        data = source.read(incl_len)
        if len(data) < incl_len:
            raise TruncatedRecord(f'record {index}: {len(data)} of {incl_len} captured bytes present')

        yield RawFrame(
            timestamp=_to_seconds(ts_sec, ts_frac, nanoseconds),
            data=data,
            wire_len=max(orig_len, incl_len),
        )
        index += 1

    logger.debug('read %d pcap records', index)
