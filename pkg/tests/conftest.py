import pytest

from capture.records import Direction, DnsInfo, IpInfo, PacketRecord, TcpInfo, UdpInfo
from config.settings import reset_settings
from tests.synthetic import manifest_csv, traffic_corpus

DEVICE = 'aa:bb:cc:00:00:01'


@pytest.fixture(autouse=True)
def fresh_settings():
    reset_settings()
    yield
    reset_settings()


@pytest.fixture(scope='session')
def corpus():
    """(manifest, traces) of the 40-device synthetic traffic corpus at 10-minute slots."""
    return traffic_corpus()


@pytest.fixture
def manifest_path(tmp_path, corpus):
    path = tmp_path / 'devices.csv'
    path.write_text(manifest_csv(corpus[0]))
    return path


def make_tcp(t, window=29200, dst='93.184.216.34', sport=40000, dport=443, ts_val=None, frame_len=100,
             direction=Direction.OUTGOING, device=DEVICE, ttl=64, header_len=20):
    if direction is Direction.OUTGOING:
        ip = IpInfo(version=4, ttl=ttl, header_len=header_len, src_addr='192.168.1.10', dst_addr=dst,
                    transport='TCP')
        tcp = TcpInfo(src_port=sport, dst_port=dport, window_size=window, ts_val=ts_val)
    else:
        ip = IpInfo(version=4, ttl=ttl, header_len=header_len, src_addr=dst, dst_addr='192.168.1.10',
                    transport='TCP')
        tcp = TcpInfo(src_port=dport, dst_port=sport, window_size=window, ts_val=ts_val)
    return PacketRecord(timestamp=t, device_key=device, direction=direction, frame_len=frame_len, ip=ip, tcp=tcp)


def make_dns(t, names, sport=5353, frame_len=80, device=DEVICE, resolver='192.168.1.1'):
    return PacketRecord(
        timestamp=t, device_key=device, direction=Direction.OUTGOING, frame_len=frame_len,
        ip=IpInfo(version=4, ttl=64, header_len=20, src_addr='192.168.1.10', dst_addr=resolver, transport='UDP'),
        udp=UdpInfo(src_port=sport, dst_port=53),
        dns=DnsInfo(is_query=True, qnames=tuple(names)),
    )
