"""
Normalized packet-event log: one JSON object per line, keys exactly the
PacketRecord field names, absent optionals omitted.
"""

import json
from typing import Any, Dict, Iterable, Iterator, TextIO

from capture.records import (
    TRANSPORT_TCP,
    TRANSPORT_UDP,
    DhcpInfo,
    Direction,
    DnsInfo,
    HttpUaInfo,
    IpInfo,
    PacketRecord,
    TcpInfo,
    UdpInfo,
    presence_violations,
)
from utils.errors import DataError

RECORD_KEYS = ('timestamp', 'device_key', 'direction', 'frame_len', 'ip', 'tcp', 'udp', 'dns', 'dhcp', 'http_ua')
REQUIRED_KEYS = ('timestamp', 'device_key', 'direction', 'frame_len')


class SchemaError(DataError):
    """An event-log line does not match the PacketRecord schema."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f'line {line_no}: {message}')
        self.line_no = line_no


class _Invalid(Exception):
    pass


def _check_keys(obj: Dict[str, Any], allowed, required, where: str):
    if not isinstance(obj, dict):
        raise _Invalid(f'{where} must be an object')
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise _Invalid(f'unknown key(s) in {where}: {", ".join(unknown)}')
    missing = [key for key in required if key not in obj]
    if missing:
        raise _Invalid(f'missing key(s) in {where}: {", ".join(missing)}')


def _int(value, name: str, low: int, high: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _Invalid(f'{name} must be an integer')
    if not low <= value <= high:
        raise _Invalid(f'{name}={value} outside [{low}, {high}]')
    return value


def _str(value, name: str) -> str:
    if not isinstance(value, str):
        raise _Invalid(f'{name} must be a string')
    return value


def _port(value, name: str) -> int:
    return _int(value, name, 0, 0xFFFF)


def _parse_ip(obj) -> IpInfo:
    fields = ('version', 'ttl', 'header_len', 'src_addr', 'dst_addr', 'transport')
    _check_keys(obj, fields, fields, 'ip')
    version = obj['version']
    if version not in (4, 6) or isinstance(version, bool):
        raise _Invalid('ip.version must be 4 or 6')
    transport = obj['transport']
    if transport not in (TRANSPORT_TCP, TRANSPORT_UDP):
        transport = _int(transport, 'ip.transport', 0, 255)
        if transport in (6, 17):
            raise _Invalid('ip.transport must be "TCP"/"UDP" for protocols 6/17')
    return IpInfo(
        version=version,
        ttl=_int(obj['ttl'], 'ip.ttl', 0, 255),
        header_len=_int(obj['header_len'], 'ip.header_len', 0, 0xFFFF),
        src_addr=_str(obj['src_addr'], 'ip.src_addr'),
        dst_addr=_str(obj['dst_addr'], 'ip.dst_addr'),
        transport=transport,
    )


def _parse_tcp(obj) -> TcpInfo:
    _check_keys(obj, ('src_port', 'dst_port', 'window_size', 'ts_val'), ('src_port', 'dst_port', 'window_size'), 'tcp')
    ts_val = obj.get('ts_val')
    return TcpInfo(
        src_port=_port(obj['src_port'], 'tcp.src_port'),
        dst_port=_port(obj['dst_port'], 'tcp.dst_port'),
        window_size=_int(obj['window_size'], 'tcp.window_size', 0, 0xFFFF),
        ts_val=None if ts_val is None else _int(ts_val, 'tcp.ts_val', 0, 0xFFFFFFFF),
    )


def _parse_udp(obj) -> UdpInfo:
    _check_keys(obj, ('src_port', 'dst_port'), ('src_port', 'dst_port'), 'udp')
    return UdpInfo(src_port=_port(obj['src_port'], 'udp.src_port'), dst_port=_port(obj['dst_port'], 'udp.dst_port'))


def _parse_dns(obj) -> DnsInfo:
    _check_keys(obj, ('is_query', 'qnames'), ('is_query', 'qnames'), 'dns')
    if not isinstance(obj['is_query'], bool):
        raise _Invalid('dns.is_query must be a boolean')
    qnames = obj['qnames']
    if not isinstance(qnames, list):
        raise _Invalid('dns.qnames must be a list')
    return DnsInfo(is_query=obj['is_query'], qnames=tuple(_str(q, 'dns.qnames[]') for q in qnames))


def _parse_dhcp(obj) -> DhcpInfo:
    _check_keys(obj, ('hostname', 'vci', 'prl', 'max_size', 'message_type'), (), 'dhcp')
    prl = obj.get('prl')
    if prl is not None:
        if not isinstance(prl, list):
            raise _Invalid('dhcp.prl must be a list')
        prl = tuple(_int(code, 'dhcp.prl[]', 0, 255) for code in prl)
    max_size = obj.get('max_size')
    message_type = obj.get('message_type')
    return DhcpInfo(
        hostname=None if obj.get('hostname') is None else _str(obj['hostname'], 'dhcp.hostname'),
        vci=None if obj.get('vci') is None else _str(obj['vci'], 'dhcp.vci'),
        prl=prl,
        max_size=None if max_size is None else _int(max_size, 'dhcp.max_size', 0, 0xFFFF),
        message_type=None if message_type is None else _int(message_type, 'dhcp.message_type', 0, 255),
    )


def _parse_http_ua(obj) -> HttpUaInfo:
    _check_keys(obj, ('length',), ('length',), 'http_ua')
    return HttpUaInfo(length=_int(obj['length'], 'http_ua.length', 0, 1 << 31))


_SECTION_PARSERS = {
    'ip': _parse_ip,
    'tcp': _parse_tcp,
    'udp': _parse_udp,
    'dns': _parse_dns,
    'dhcp': _parse_dhcp,
    'http_ua': _parse_http_ua,
}


def record_from_dict(obj: Dict[str, Any]) -> PacketRecord:
    """Build a PacketRecord from a decoded JSON object (raises _Invalid)."""
    _check_keys(obj, RECORD_KEYS, REQUIRED_KEYS, 'record')

    timestamp = obj['timestamp']
    if isinstance(timestamp, bool) or not isinstance(timestamp, (int, float)):
        raise _Invalid('timestamp must be a number')
    try:
        direction = Direction(obj['direction'])
    except ValueError:
        raise _Invalid(f'direction must be Outgoing or Incoming, got {obj["direction"]!r}')

    sections = {
        key: parser(obj[key])
        for key, parser in _SECTION_PARSERS.items()
        if obj.get(key) is not None
    }
    record = PacketRecord(
        timestamp=float(timestamp),
        device_key=_str(obj['device_key'], 'device_key'),
        direction=direction,
        frame_len=_int(obj['frame_len'], 'frame_len', 0, 1 << 31),
        **sections,
    )
    problems = presence_violations(record)
    if problems:
        raise _Invalid('; '.join(problems))
    return record


def parse_event_log(lines: Iterable[str]) -> Iterator[PacketRecord]:
    """
    Parse an event log.

    Args:
        lines: Text lines (a text file object works); blank lines are skipped

    Raises:
        SchemaError naming the 1-based line number of the first bad line
    """
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(line_no, f'invalid JSON: {e.msg}')
        try:
            yield record_from_dict(obj)
        except _Invalid as e:
            raise SchemaError(line_no, str(e))


def _compact(section) -> Dict[str, Any]:
    out = {}
    for key, value in section.__dict__.items():
        if value is None:
            continue
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def record_to_dict(record: PacketRecord) -> Dict[str, Any]:
    obj = {
        'timestamp': record.timestamp,
        'device_key': record.device_key,
        'direction': record.direction.value,
        'frame_len': record.frame_len,
    }
    for key in _SECTION_PARSERS:
        section = getattr(record, key)
        if section is not None:
            obj[key] = _compact(section)
    return obj


def serialize_record(record: PacketRecord) -> str:
    """Canonical single-line JSON form of a record."""
    return json.dumps(record_to_dict(record), separators=(',', ':'))


def write_event_log(records: Iterable[PacketRecord], out: TextIO) -> int:
    """Write records one per line; returns the count written."""
    count = 0
    for record in records:
        out.write(serialize_record(record))
        out.write('\n')
        count += 1
    return count
