"""
Protocol numbers and option codes used by the decoder and the DHCP classifier.
"""

import re

# pcap magic -> (struct byte order, timestamp fraction is nanoseconds)
PCAP_MAGIC_TO_FORMAT = {
    0xa1b2c3d4: ('<', False),
    0xd4c3b2a1: ('>', False),
    0xa1b23c4d: ('<', True),
    0x4d3cb2a1: ('>', True),
}

LINKTYPE_ETHERNET = 1

# IP protocol numbers
IP_PROTO_TCP = 6
IP_PROTO_UDP = 17

DNS_PORT = 53
DHCP_PORTS = frozenset({67, 68})

# DHCP (RFC 2132)
DHCP_MAGIC_COOKIE = b'\x63\x82\x53\x63'
BOOTP_FIXED_HEADER_LEN = 236
DHCP_OPT_PAD = 0
DHCP_OPT_END = 255
DHCP_OPT_HOSTNAME = 12
DHCP_OPT_MESSAGE_TYPE = 53
DHCP_OPT_PARAMETER_REQUEST_LIST = 55
DHCP_OPT_MAX_MESSAGE_SIZE = 57
DHCP_OPT_VENDOR_CLASS_ID = 60

DHCP_MESSAGE_TYPE_TO_NAME = {
    1: 'DISCOVER',
    2: 'OFFER',
    3: 'REQUEST',
    4: 'DECLINE',
    5: 'ACK',
    6: 'NAK',
    7: 'RELEASE',
    8: 'INFORM',
}

# Request methods recognised at the start of a TCP payload
HTTP_METHODS = (b'GET', b'POST', b'PUT', b'HEAD', b'DELETE', b'OPTIONS', b'PATCH')

_MAC_HEX = re.compile(r'^[0-9a-f]{12}$')


def get_message_type_name(message_type: int) -> str:
    """
    Convert a DHCP message-type value to its name.

    Examples:
        >>> get_message_type_name(1)
        'DISCOVER'
        >>> get_message_type_name(99)
        'UNKNOWN'
    """
    return DHCP_MESSAGE_TYPE_TO_NAME.get(message_type, 'UNKNOWN')


def canonical_mac(mac) -> str:
    """
    Canonical MAC form: lowercase, colon-separated.

    Accepts 6 raw bytes or a string using ':', '-' or '.' separators.

    Examples:
        >>> canonical_mac('AA-BB-CC-00-11-22')
        'aa:bb:cc:00:11:22'
        >>> canonical_mac(b'\\x00\\x11\\x22\\x33\\x44\\x55')
        '00:11:22:33:44:55'
    """
    if isinstance(mac, (bytes, bytearray)):
        if len(mac) != 6:
            raise ValueError(f'MAC must be 6 bytes, got {len(mac)}')
        return ':'.join(f'{b:02x}' for b in mac)

    digits = re.sub(r'[:\-.]', '', str(mac).strip().lower())
    if not _MAC_HEX.match(digits):
        raise ValueError(f'invalid MAC address {mac!r}')
    return ':'.join(digits[i:i + 2] for i in range(0, 12, 2))
