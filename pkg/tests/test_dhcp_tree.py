import random

import numpy as np
import pytest

from capture.records import DeviceTrace, DhcpInfo, Direction, IpInfo, Label, PacketRecord, UdpInfo
from classifier.dhcp_tree import (
    DhcpLeaf,
    DhcpSignatureModel,
    DhcpSplit,
    build_vocabulary,
    classify_device,
    classify_devices,
    decode_onehot,
    device_labels,
    encode_onehot,
    gini,
    predict_tree,
    tokenize_dhcp,
    train_dhcp_model,
    train_tree,
)
from classifier.errors import ModelFormatError, SingleClass
from classifier.persistence import load_model, save_model
from classifier.verdict import Verdict
from tests.conftest import make_tcp
from tests.synthetic import DHCP_NOISE_LABELS, DHCP_SIGNAL_LABELS, dhcp_rows


def _dhcp(t, device, direction=Direction.OUTGOING, **fields):
    return PacketRecord(
        timestamp=t, device_key=device, direction=direction, frame_len=342,
        ip=IpInfo(4, 64, 20, '0.0.0.0', '255.255.255.255', 'UDP'),
        udp=UdpInfo(68, 67) if direction is Direction.OUTGOING else UdpInfo(67, 68),
        dhcp=DhcpInfo(**fields),
    )


def _matrix(rows, vocabulary):
    X = np.array([encode_onehot(labels, vocabulary) for labels, _ in rows])
    y = [label.sign for _, label in rows]
    return X, y


class TestTokenize:
    def test_hostname(self):
        assert tokenize_dhcp(hostname='Galaxy-A7-2017') == {'galaxy', 'a7'}

    def test_vendor_class_drops_numbers(self):
        assert tokenize_dhcp(vci='MSFT 5.0') == {'msft'}

    def test_prl_only(self):
        assert tokenize_dhcp(prl=[1, 3, 6, 12, 15]) == {'prl:1', 'prl:3', 'prl:6', 'prl:12', 'prl:15'}

    def test_size_and_message_types(self):
        assert tokenize_dhcp(max_size=1500, message_types=[1, 3]) == {'maxsz:1500', 'msg:1', 'msg:3'}

    def test_nothing(self):
        assert tokenize_dhcp() == frozenset()

    def test_superscript_digit_is_kept(self):
        assert tokenize_dhcp(hostname='cam-2017-\u00b2') == {'cam', '\u00b2'}

    def test_custom_delimiters(self):
        assert tokenize_dhcp(hostname='cam_01-x', delimiters='-') == {'cam_01', 'x'}

    def test_word_labels_are_stable(self):
        labels = tokenize_dhcp(hostname='udhcp 1.30.1', vci='dhcpcd-9.4.1:Linux-5.10')
        assert tokenize_dhcp(hostname=' '.join(sorted(labels))) == labels


class TestDeviceLabels:
    def test_union_over_outgoing_packets(self):
        trace = DeviceTrace('d', Label.IOT, (
            _dhcp(1.0, 'd', hostname='cam', message_type=1),
            make_tcp(2.0, device='d'),
            _dhcp(3.0, 'd', prl=(1, 3), message_type=3),
            _dhcp(4.0, 'd', direction=Direction.INCOMING, hostname='router'),
        ))
        assert device_labels(trace) == {'cam', 'msg:1', 'msg:3', 'prl:1', 'prl:3'}

    def test_until_is_exclusive(self):
        trace = DeviceTrace('d', Label.IOT, (_dhcp(1.0, 'd', hostname='a'), _dhcp(5.0, 'd', hostname='b')))
        assert device_labels(trace, until=5.0) == {'a'}
        assert device_labels(trace, until=1.0) is None

    def test_no_dhcp(self):
        assert device_labels(DeviceTrace('d', Label.NOT, (make_tcp(1.0, device='d'),))) is None


class TestEncoding:
    def test_vocabulary(self):
        assert build_vocabulary([]) == []
        assert build_vocabulary([{'a'}, {'b', 'a'}]) == ['a', 'b']

    def test_vocabulary_matches_sorted_union(self):
        rng = random.Random(2)
        pool = list(DHCP_SIGNAL_LABELS + DHCP_NOISE_LABELS)
        sets = [set(rng.sample(pool, rng.randint(0, 5))) for _ in range(100)]
        expected = sorted({label for s in sets for label in s})
        assert build_vocabulary(sets) == expected

    def test_onehot(self):
        vocabulary = ['a', 'b', 'c']
        assert encode_onehot([], vocabulary).tolist() == [0, 0, 0]
        assert encode_onehot(vocabulary, vocabulary).tolist() == [1, 1, 1]
        assert encode_onehot(['c', 'zzz'], vocabulary).tolist() == [0, 0, 1]
        assert decode_onehot([1, 0, 1], vocabulary) == {'a', 'c'}

    def test_gini(self):
        assert gini(1, 3) == 0.375
        assert gini(0, 0) == 0.0
        assert gini(4, 0) == 0.0


class TestTrainTree:
    def test_single_perfect_label(self):
        vocabulary = ['android', 'prl:12']
        rows = [({'prl:12'}, Label.IOT), ({'prl:12', 'android'}, Label.IOT),
                ({'android'}, Label.NOT), (set(), Label.NOT)]
        model = train_tree(*_matrix(rows, vocabulary), vocabulary)
        assert model.depth == 1
        assert isinstance(model.root, DhcpSplit)
        assert vocabulary[model.root.label] == 'prl:12'
        assert predict_tree(model, set()) is Verdict.NOT
        assert predict_tree(model, {'prl:12', 'unknown'}) is Verdict.IOT

    def test_learns_signature_rule(self):
        train = dhcp_rows(400, seed=1)
        held_out = dhcp_rows(200, seed=2)
        vocabulary = build_vocabulary(labels for labels, _ in train)
        model = train_tree(*_matrix(train, vocabulary), vocabulary)
        assert model.depth <= 3
        assert vocabulary[model.root.label] == 'prl:12'
        assert all(predict_tree(model, labels) is Verdict.from_label(label) for labels, label in held_out)

    def test_depth_limit(self):
        rows = dhcp_rows(300, seed=1)
        vocabulary = build_vocabulary(labels for labels, _ in rows)
        model = train_tree(*_matrix(rows, vocabulary), vocabulary, max_depth=1)
        assert model.depth == 1

    def test_tied_leaf_goes_to_iot(self):
        model = train_tree(np.array([[1], [1]]), [1, -1], ['a'])
        assert model.root == DhcpLeaf(Verdict.IOT, (1, 1))

    def test_single_class(self):
        with pytest.raises(SingleClass):
            train_tree(np.array([[1], [0]]), [1, 1], ['a'])

    def test_leaves_match_manual_descent(self):
        rows = dhcp_rows(300, seed=4)
        vocabulary = build_vocabulary(labels for labels, _ in rows)
        model = train_tree(*_matrix(rows, vocabulary), vocabulary)
        rng = random.Random(8)
        for _ in range(100):
            labels = {label for label in vocabulary if rng.random() < 0.3}
            node = model.root
            while not isinstance(node, DhcpLeaf):
                node = node.right if vocabulary[node.label] in labels else node.left
            assert predict_tree(model, labels) is node.verdict


class TestDhcpModel:
    @pytest.fixture
    def traces(self):
        return [
            DeviceTrace('cam', Label.IOT, (_dhcp(1.0, 'cam', hostname='ipcam', prl=(1, 3, 12)),)),
            DeviceTrace('plug', Label.IOT, (_dhcp(1.0, 'plug', vci='udhcp 1.30', prl=(1, 12)),)),
            DeviceTrace('phone', Label.NOT, (_dhcp(1.0, 'phone', hostname='Galaxy-A7-2017', prl=(1, 3, 15)),)),
            DeviceTrace('laptop', Label.NOT, (_dhcp(1.0, 'laptop', vci='dhcpcd-9.4.1', prl=(1, 3, 6, 15)),)),
            DeviceTrace('quiet', Label.NOT, (make_tcp(1.0, device='quiet'),)),
        ]

    def test_train_and_classify(self, traces):
        model = train_dhcp_model(traces)
        verdicts = classify_devices(model, traces)
        assert verdicts == {'cam': Verdict.IOT, 'plug': Verdict.IOT, 'phone': Verdict.NOT,
                            'laptop': Verdict.NOT, 'quiet': Verdict.ABSTAIN}
        assert 'prl:12' in model.vocabulary
        assert 'quiet' not in ''.join(model.vocabulary)

    def test_classify_before_first_dhcp_abstains(self, traces):
        model = train_dhcp_model(traces)
        assert classify_device(model, traces[0], until=1.0) is Verdict.ABSTAIN
        assert classify_device(model, traces[0], until=1.5) is Verdict.IOT

    def test_json_round_trip(self, traces, tmp_path):
        model = train_dhcp_model(traces, delimiters=' -.')
        path = tmp_path / 'dhcp.json'
        save_model(model, str(path))
        loaded = load_model(str(path))
        assert loaded == model
        assert loaded.delimiters == ' -.'
        assert [classify_device(loaded, t) for t in traces] == [classify_device(model, t) for t in traces]

    def test_bad_split_index(self, traces):
        obj = train_dhcp_model(traces).to_dict()
        obj['nodes'] = [{'label': 99, 'left': {'leaf': 'IoT'}, 'right': {'leaf': 'NoT'}}]
        with pytest.raises(ModelFormatError):
            DhcpSignatureModel.from_dict(obj)

    def test_two_roots(self, traces):
        obj = train_dhcp_model(traces).to_dict()
        obj['nodes'] = obj['nodes'] * 2
        with pytest.raises(ModelFormatError):
            DhcpSignatureModel.from_dict(obj)
