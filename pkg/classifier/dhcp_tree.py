"""
DHCP signature classifier.

Hostname and vendor-class strings are cut into lowercase word labels; the
parameter request list, message types and maximum message size become
namespaced labels ("prl:12", "msg:3", "maxsz:1500"). A device's labels are
one-hot encoded over the training vocabulary and classified by a small
CART tree (Gini impurity, binary present/absent splits).
"""

import logging
import re
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from capture.records import DeviceTrace
from classifier.errors import ModelFormatError, SingleClass
from classifier.verdict import Verdict
from config.settings import DEFAULT_DHCP_DELIMITERS

logger = logging.getLogger(__name__)

MODEL_KIND = 'dhcp_tree'
MODEL_VERSION = 1

DEFAULT_MAX_DEPTH = 5
DEFAULT_MIN_LEAF = 1

# Tolerance when comparing weighted impurities
_EPS = 1e-12


def _splitter(delimiters: str):
    return re.compile('[' + re.escape(delimiters) + ']+')


def _words(text: Optional[str], delimiters: str) -> Set[str]:
    if not text:
        return set()
    return {
        fragment for fragment in _splitter(delimiters).split(text.lower())
        if fragment and not fragment.isdecimal()
    }


def tokenize_dhcp(hostname: Optional[str] = None, vci: Optional[str] = None, prl: Optional[Iterable[int]] = None,
                  max_size: Optional[int] = None, message_types: Optional[Iterable[int]] = None,
                  delimiters: str = DEFAULT_DHCP_DELIMITERS) -> FrozenSet[str]:
    """
    Label set of one client's DHCP fields.

    >>> sorted(tokenize_dhcp(hostname='Galaxy-A7-2017'))
    ['a7', 'galaxy']
    >>> sorted(tokenize_dhcp(vci='MSFT 5.0', prl=[1, 3]))
    ['msft', 'prl:1', 'prl:3']
    """
    labels = _words(hostname, delimiters) | _words(vci, delimiters)
    labels.update(f'prl:{code}' for code in (prl or ()))
    labels.update(f'msg:{value}' for value in (message_types or ()))
    if max_size is not None:
        labels.add(f'maxsz:{max_size}')
    return frozenset(labels)


def device_labels(trace: DeviceTrace, until: Optional[float] = None,
                  delimiters: str = DEFAULT_DHCP_DELIMITERS) -> Optional[FrozenSet[str]]:
    """
    Union of labels over the DHCP packets a device sent (before `until` when given).

    Returns:
        The label set, or None when the device sent no DHCP packet
    """
    labels: Set[str] = set()
    seen = False
    for record in trace.records:
        if until is not None and record.timestamp >= until:
            break
        if record.dhcp is None or not record.is_outgoing:
            continue
        seen = True
        dhcp = record.dhcp
        labels |= tokenize_dhcp(
            hostname=dhcp.hostname,
            vci=dhcp.vci,
            prl=dhcp.prl,
            max_size=dhcp.max_size,
            message_types=[dhcp.message_type] if dhcp.message_type is not None else None,
            delimiters=delimiters,
        )
    return frozenset(labels) if seen else None


def device_label_sets(traces: Sequence[DeviceTrace],
                      delimiters: str = DEFAULT_DHCP_DELIMITERS) -> Dict[str, FrozenSet[str]]:
    """Label set of every device with DHCP traffic."""
    sets = {}
    for trace in traces:
        labels = device_labels(trace, delimiters=delimiters)
        if labels is not None:
            sets[trace.device_key] = labels
    return sets


def build_vocabulary(label_sets: Iterable[Iterable[str]]) -> List[str]:
    """Sorted union of all labels."""
    return sorted(set().union(*[set(labels) for labels in label_sets]))


def encode_onehot(labels: Iterable[str], vocabulary: Sequence[str]) -> np.ndarray:
    """Bit i is 1 iff vocabulary[i] is in labels; other labels are ignored."""
    present = set(labels)
    return np.array([1 if label in present else 0 for label in vocabulary], dtype=np.uint8)


def decode_onehot(bits: Sequence[int], vocabulary: Sequence[str]) -> FrozenSet[str]:
    return frozenset(label for label, bit in zip(vocabulary, bits) if bit)


def gini(n_not: float, n_iot: float) -> float:
    """
    Gini impurity of a node with the given class counts.

    >>> gini(1, 3)
    0.375
    """
    n = n_not + n_iot
    if n == 0:
        return 0.0
    return 1.0 - (n_not / n) ** 2 - (n_iot / n) ** 2


@dataclass(frozen=True)
class DhcpLeaf:
    verdict: Verdict
    counts: Tuple[int, int]  # (n_not, n_iot)

    def to_dict(self) -> Dict[str, Any]:
        return {'leaf': self.verdict.value, 'counts': list(self.counts)}


@dataclass(frozen=True)
class DhcpSplit:
    label: int
    left: 'DhcpNode'   # label absent
    right: 'DhcpNode'  # label present

    def to_dict(self) -> Dict[str, Any]:
        return {'label': self.label, 'left': self.left.to_dict(), 'right': self.right.to_dict()}


DhcpNode = Union[DhcpLeaf, DhcpSplit]


def tree_depth(node: DhcpNode) -> int:
    if isinstance(node, DhcpLeaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def _node_from_dict(obj: Dict[str, Any], vocabulary_size: int) -> DhcpNode:
    if 'leaf' in obj:
        counts = obj.get('counts', [0, 0])
        return DhcpLeaf(verdict=Verdict(obj['leaf']), counts=(int(counts[0]), int(counts[1])))
    label = int(obj['label'])
    if not 0 <= label < vocabulary_size:
        raise ModelFormatError(f'split label index {label} outside vocabulary of {vocabulary_size}')
    return DhcpSplit(
        label=label,
        left=_node_from_dict(obj['left'], vocabulary_size),
        right=_node_from_dict(obj['right'], vocabulary_size),
    )


@dataclass(frozen=True)
class DhcpSignatureModel:
    vocabulary: Tuple[str, ...]
    root: DhcpNode
    max_depth: int = DEFAULT_MAX_DEPTH
    delimiters: str = DEFAULT_DHCP_DELIMITERS

    @property
    def depth(self) -> int:
        return tree_depth(self.root)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': MODEL_KIND,
            'version': MODEL_VERSION,
            'vocabulary': list(self.vocabulary),
            'nodes': [self.root.to_dict()],
            'max_depth': self.max_depth,
            'delimiters': self.delimiters,
        }

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> 'DhcpSignatureModel':
        if obj.get('kind') != MODEL_KIND or obj.get('version') != MODEL_VERSION:
            raise ModelFormatError(f'not a dhcp_tree model v{MODEL_VERSION}: kind={obj.get("kind")!r} '
                                   f'version={obj.get("version")!r}')
        try:
            vocabulary = tuple(str(label) for label in obj['vocabulary'])
            nodes = obj['nodes']
            if len(nodes) != 1:
                raise ModelFormatError(f'expected one root node, got {len(nodes)}')
            return cls(
                vocabulary=vocabulary,
                root=_node_from_dict(nodes[0], len(vocabulary)),
                max_depth=int(obj.get('max_depth', DEFAULT_MAX_DEPTH)),
                delimiters=str(obj.get('delimiters', DEFAULT_DHCP_DELIMITERS)),
            )
        except KeyError as e:
            raise ModelFormatError(f'dhcp_tree model is missing key {e}')
        except (TypeError, ValueError, IndexError) as e:
            raise ModelFormatError(f'invalid dhcp_tree model: {e}')


def _leaf(y: np.ndarray) -> DhcpLeaf:
    n_iot = int((y > 0).sum())
    n_not = int(len(y) - n_iot)
    # Majority; ties go to the positive class
    return DhcpLeaf(verdict=Verdict.IOT if n_iot >= n_not else Verdict.NOT, counts=(n_not, n_iot))


def _grow(X: np.ndarray, y: np.ndarray, depth: int, max_depth: int, min_leaf: int) -> DhcpNode:
    n = len(y)
    n_iot = int((y > 0).sum())
    n_not = n - n_iot
    if n_iot == 0 or n_not == 0 or depth >= max_depth or n < 2 * min_leaf:
        return _leaf(y)

    positive = (y > 0)
    right_n = X.sum(axis=0).astype(np.float64)
    right_iot = X[positive].sum(axis=0).astype(np.float64)
    right_not = right_n - right_iot
    left_n = n - right_n
    left_iot = n_iot - right_iot
    left_not = left_n - left_iot

    with np.errstate(divide='ignore', invalid='ignore'):
        gini_right = 1.0 - (right_iot / right_n) ** 2 - (right_not / right_n) ** 2
        gini_left = 1.0 - (left_iot / left_n) ** 2 - (left_not / left_n) ** 2
        weighted = (left_n * gini_left + right_n * gini_right) / n
    weighted[(left_n < min_leaf) | (right_n < min_leaf)] = np.inf
    if not np.isfinite(weighted).any():
        return _leaf(y)

    best_value = weighted[np.isfinite(weighted)].min()
    if best_value >= gini(n_not, n_iot) - _EPS:
        return _leaf(y)
    # Lowest vocabulary index among (near-)equal impurities
    label = int(np.flatnonzero(weighted <= best_value + _EPS)[0])

    present = X[:, label].astype(bool)
    return DhcpSplit(
        label=label,
        left=_grow(X[~present], y[~present], depth + 1, max_depth, min_leaf),
        right=_grow(X[present], y[present], depth + 1, max_depth, min_leaf),
    )


def train_tree(X: np.ndarray, y: Sequence[int], vocabulary: Sequence[str], max_depth: int = DEFAULT_MAX_DEPTH,
               min_leaf: int = DEFAULT_MIN_LEAF, delimiters: str = DEFAULT_DHCP_DELIMITERS) -> DhcpSignatureModel:
    """
    Fit a CART tree on one-hot rows.

    Args:
        X: 0/1 matrix, one column per vocabulary label
        y: +1 (IoT) / -1 (NoT) per row
        vocabulary: Column labels
        max_depth: Maximum number of splits on any root-to-leaf path
        min_leaf: Minimum rows per child

    Raises:
        SingleClass if y holds only one class
    """
    X = np.asarray(X, dtype=np.uint8).reshape(len(y), len(vocabulary))
    y = np.asarray(y)
    if not ((y > 0).any() and (y < 0).any()):
        raise SingleClass('DHCP training data must contain both IoT and NoT devices')
    root = _grow(X, y, 0, max_depth, max(1, min_leaf))
    return DhcpSignatureModel(vocabulary=tuple(vocabulary), root=root, max_depth=max_depth, delimiters=delimiters)


def predict_tree(model: DhcpSignatureModel, labels: Iterable[str]) -> Verdict:
    """Descend the tree with the device's label set; unknown labels are ignored."""
    present = set(labels)
    node = model.root
    while isinstance(node, DhcpSplit):
        node = node.right if model.vocabulary[node.label] in present else node.left
    return node.verdict


def train_dhcp_model(traces: Sequence[DeviceTrace], max_depth: int = DEFAULT_MAX_DEPTH,
                     min_leaf: int = DEFAULT_MIN_LEAF,
                     delimiters: str = DEFAULT_DHCP_DELIMITERS) -> DhcpSignatureModel:
    """
    Train on every device that sent DHCP; other devices are skipped.

    Raises:
        SingleClass
    """
    label_sets = device_label_sets(traces, delimiters)
    skipped = len(traces) - len(label_sets)
    if skipped:
        logger.info('%d devices sent no DHCP and are left out of training', skipped)

    labels_by_device = {trace.device_key: trace.label for trace in traces}
    devices = list(label_sets)
    vocabulary = build_vocabulary(label_sets[device] for device in devices)
    X = np.array([encode_onehot(label_sets[device], vocabulary) for device in devices], dtype=np.uint8)
    y = [labels_by_device[device].sign for device in devices]

    model = train_tree(X.reshape(len(devices), len(vocabulary)), y, vocabulary, max_depth=max_depth,
                       min_leaf=min_leaf, delimiters=delimiters)
    logger.info('trained DHCP tree on %d devices: %d labels, depth %d', len(devices), len(vocabulary), model.depth)
    return model


def classify_device(model: DhcpSignatureModel, trace: DeviceTrace, until: Optional[float] = None) -> Verdict:
    """Verdict from the device's DHCP so far; Abstain when it sent none."""
    labels = device_labels(trace, until=until, delimiters=model.delimiters)
    if labels is None:
        return Verdict.ABSTAIN
    return predict_tree(model, labels)


def classify_devices(model: DhcpSignatureModel, traces: Sequence[DeviceTrace]) -> Dict[str, Verdict]:
    verdicts = {trace.device_key: classify_device(model, trace) for trace in traces}
    abstained = sum(1 for verdict in verdicts.values() if verdict is Verdict.ABSTAIN)
    if abstained:
        logger.info('%d of %d devices abstained (no DHCP)', abstained, len(verdicts))
    return verdicts
