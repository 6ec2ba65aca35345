"""Model JSON files."""

import json
from typing import Any, Dict, Union

from classifier.dhcp_tree import DhcpSignatureModel
from classifier.errors import ModelFormatError
from classifier.linear import LinearModel

Model = Union[LinearModel, DhcpSignatureModel]

_MODEL_TYPES = {
    'linear': LinearModel,
    'dhcp_tree': DhcpSignatureModel,
}


def model_from_dict(obj: Dict[str, Any]) -> Model:
    if not isinstance(obj, dict):
        raise ModelFormatError('model JSON must be an object')
    model_type = _MODEL_TYPES.get(obj.get('kind'))
    if model_type is None:
        raise ModelFormatError(f'unknown model kind {obj.get("kind")!r}')
    return model_type.from_dict(obj)


def save_model(model: Model, path: str):
    # json writes floats with repr, which round-trips every double exactly
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model.to_dict(), f, indent=2)
        f.write('\n')


def load_model(path: str) -> Model:
    """
    Raises:
        ModelFormatError on unreadable JSON or an invalid model
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            obj = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f'{path}: invalid JSON: {e}')
    return model_from_dict(obj)
