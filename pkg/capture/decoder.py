"""
Ethernet frame decoding down to the fields the traffic features and the
DHCP classifier consume.

Link, network and transport layers are decoded with dpkt. DHCP options and the
HTTP User-Agent are scanned directly from the UDP/TCP payload. A malformed
layer leaves its field (and everything above it) absent; the frame itself is
still returned so it counts toward link-layer features.
"""

import ipaddress
import logging
import struct
from typing import List, Optional, Tuple

import dpkt

from capture.records import (
    TRANSPORT_TCP,
    TRANSPORT_UDP,
    DhcpInfo,
    DnsInfo,
    Frame,
    HttpUaInfo,
    IpInfo,
    TcpInfo,
    UdpInfo,
)
from utils.protocol_mappings import (
    BOOTP_FIXED_HEADER_LEN,
    DHCP_MAGIC_COOKIE,
    DHCP_OPT_END,
    DHCP_OPT_HOSTNAME,
    DHCP_OPT_MAX_MESSAGE_SIZE,
    DHCP_OPT_MESSAGE_TYPE,
    DHCP_OPT_PAD,
    DHCP_OPT_PARAMETER_REQUEST_LIST,
    DHCP_OPT_VENDOR_CLASS_ID,
    DHCP_PORTS,
    DNS_PORT,
    HTTP_METHODS,
    IP_PROTO_TCP,
    IP_PROTO_UDP,
    canonical_mac,
)

logger = logging.getLogger(__name__)

ETHERNET_HEADER_LEN = 14
IPV6_HEADER_LEN = 40
USER_AGENT_PREFIX = b'user-agent:'


def decode_frame(data: bytes, timestamp: float, wire_len: Optional[int] = None) -> Optional[Frame]:
    """
    Decode one captured Ethernet frame.

    Args:
        data: Captured frame bytes
        timestamp: Capture time in seconds
        wire_len: Original length on the wire (defaults to len(data))

    Returns:
        Frame with whatever layers decoded cleanly, or None if the buffer is
        too short to hold an Ethernet header
    """
    if len(data) < ETHERNET_HEADER_LEN:
        return None

    frame_len = max(wire_len or 0, len(data))
    src_mac = canonical_mac(data[6:12])
    dst_mac = canonical_mac(data[0:6])

    try:
        eth = dpkt.ethernet.Ethernet(data)
    except Exception as e:
        logger.debug('link layer undecodable at %.6f: %s', timestamp, e)
        return Frame(timestamp=timestamp, src_mac=src_mac, dst_mac=dst_mac, frame_len=frame_len)

    ip = tcp = udp = dns = dhcp = http_ua = None
    try:
        ip, segment = _decode_network(eth.data)
        if isinstance(segment, dpkt.tcp.TCP):
            tcp = _decode_tcp(segment)
            http_ua = _decode_user_agent(bytes(segment.data))
        elif isinstance(segment, dpkt.udp.UDP):
            udp = UdpInfo(src_port=segment.sport, dst_port=segment.dport)
            payload = bytes(segment.data)
            if DNS_PORT in (segment.sport, segment.dport):
                dns = _decode_dns(payload)
            if {segment.sport, segment.dport} == DHCP_PORTS:
                dhcp = parse_dhcp_options(payload)
    except Exception as e:
        logger.debug('upper layers undecodable at %.6f: %s', timestamp, e)
        tcp = udp = dns = dhcp = http_ua = None

    return Frame(
        timestamp=timestamp,
        src_mac=src_mac,
        dst_mac=dst_mac,
        frame_len=frame_len,
        ip=ip,
        tcp=tcp,
        udp=udp,
        dns=dns,
        dhcp=dhcp,
        http_ua=http_ua,
    )


def _transport_of(protocol: int):
    if protocol == IP_PROTO_TCP:
        return TRANSPORT_TCP
    if protocol == IP_PROTO_UDP:
        return TRANSPORT_UDP
    return int(protocol)


def _decode_network(packet) -> Tuple[Optional[IpInfo], object]:
    """Return (IpInfo, transport segment object or raw bytes)."""
    if isinstance(packet, dpkt.ip.IP):
        info = IpInfo(
            version=4,
            ttl=packet.ttl,
            header_len=packet.hl * 4,
            src_addr=str(ipaddress.IPv4Address(bytes(packet.src))),
            dst_addr=str(ipaddress.IPv4Address(bytes(packet.dst))),
            transport=_transport_of(packet.p),
        )
        return info, packet.data

    if isinstance(packet, dpkt.ip6.IP6):
        protocol = getattr(packet, 'p', packet.nxt)
        info = IpInfo(
            version=6,
            ttl=packet.hlim,
            header_len=IPV6_HEADER_LEN,
            src_addr=str(ipaddress.IPv6Address(bytes(packet.src))),
            dst_addr=str(ipaddress.IPv6Address(bytes(packet.dst))),
            transport=_transport_of(protocol),
        )
        return info, packet.data

    return None, None


def _decode_tcp(segment) -> TcpInfo:
    ts_val = None
    try:
        for option, value in dpkt.tcp.parse_opts(bytes(segment.opts)):
            if option == dpkt.tcp.TCP_OPT_TIMESTAMP and len(value) == 8:
                ts_val = struct.unpack('>I', value[:4])[0]
                break
    except Exception as e:
        logger.debug('bad TCP options: %s', e)
        ts_val = None
    return TcpInfo(
        src_port=segment.sport,
        dst_port=segment.dport,
        window_size=segment.win,
        ts_val=ts_val,
    )


def _decode_dns(payload: bytes) -> Optional[DnsInfo]:
    try:
        message = dpkt.dns.DNS(payload)
    except Exception as e:
        logger.debug('bad DNS message: %s', e)
        return None

    if message.qr != dpkt.dns.DNS_Q:
        return DnsInfo(is_query=False)

    qnames = []
    for question in message.qd:
        name = question.name
        if isinstance(name, bytes):
            name = name.decode('ascii', errors='replace')
        qnames.append(name.lower().rstrip('.'))
    return DnsInfo(is_query=True, qnames=tuple(qnames))


def _scan_options(buf: bytes) -> Optional[List[Tuple[int, bytes]]]:
    """Walk DHCP TLV options; None when an option overruns the buffer."""
    options = []
    pos = 0
    while pos < len(buf):
        code = buf[pos]
        if code == DHCP_OPT_END:
            break
        if code == DHCP_OPT_PAD:
            pos += 1
            continue
        if pos + 1 >= len(buf):
            return None
        length = buf[pos + 1]
        value = buf[pos + 2:pos + 2 + length]
        if len(value) != length:
            return None
        options.append((code, value))
        pos += 2 + length
    return options


def _decode_text(value: bytes) -> str:
    return value.rstrip(b'\x00').decode('utf-8', errors='replace')


def parse_dhcp_options(payload: bytes) -> Optional[DhcpInfo]:
    """
    Extract hostname, vendor class, parameter request list, max message size and
    message type from a BOOTP/DHCP payload.

    Returns:
        DhcpInfo, or None when the payload is not a well-formed DHCP message
    """
    cookie_end = BOOTP_FIXED_HEADER_LEN + len(DHCP_MAGIC_COOKIE)
    if len(payload) < cookie_end:
        return None
    if payload[BOOTP_FIXED_HEADER_LEN:cookie_end] != DHCP_MAGIC_COOKIE:
        return None

    options = _scan_options(payload[cookie_end:])
    if options is None:
        return None

    fields = {}
    for code, value in options:
        if code == DHCP_OPT_HOSTNAME and value:
            fields['hostname'] = _decode_text(value)
        elif code == DHCP_OPT_VENDOR_CLASS_ID and value:
            fields['vci'] = _decode_text(value)
        elif code == DHCP_OPT_PARAMETER_REQUEST_LIST:
            fields['prl'] = tuple(value)
        elif code == DHCP_OPT_MAX_MESSAGE_SIZE and len(value) == 2:
            fields['max_size'] = struct.unpack('>H', value)[0]
        elif code == DHCP_OPT_MESSAGE_TYPE and len(value) == 1:
            fields['message_type'] = value[0]
    return DhcpInfo(**fields)


def _decode_user_agent(payload: bytes) -> Optional[HttpUaInfo]:
    """Request-line heuristic: no reassembly, a header split across segments is missed."""
    if not any(payload.startswith(method + b' ') for method in HTTP_METHODS):
        return None

    lines = payload.split(b'\r\n')
    # The last element is unterminated (or empty after a trailing CRLF)
    for line in lines[1:-1]:
        if not line:
            break
        if line[:len(USER_AGENT_PREFIX)].lower() == USER_AGENT_PREFIX:
            value = line[len(USER_AGENT_PREFIX):].strip(b' ')
            return HttpUaInfo(length=len(value))
    return None
