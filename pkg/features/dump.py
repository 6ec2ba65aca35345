"""Feature dump CSV: device_key, slot_start, width, then one column per feature."""

import math
from typing import List, Sequence

import pandas as pd

from features.extractor import ALL_FEATURES, FeatureId, SlotFeatureVector
from utils.errors import DataError

META_COLUMNS = ['device_key', 'slot_start', 'width']
FEATURE_COLUMNS = [feature.value for feature in ALL_FEATURES]


class FeatureDumpError(DataError):
    """Feature dump CSV is malformed."""


def vectors_to_frame(vectors: Sequence[SlotFeatureVector]) -> pd.DataFrame:
    rows = []
    for vector in vectors:
        row = {'device_key': vector.device_key, 'slot_start': vector.slot_start, 'width': vector.width}
        for feature in ALL_FEATURES:
            row[feature.value] = vector.get(feature)
        rows.append(row)
    return pd.DataFrame(rows, columns=META_COLUMNS + FEATURE_COLUMNS)


def write_feature_dump(vectors: Sequence[SlotFeatureVector], path) -> int:
    """Write vectors as CSV; missing values become empty cells. Returns the row count."""
    frame = vectors_to_frame(vectors)
    frame.to_csv(path, index=False, na_rep='', float_format='%.17g')
    return len(frame)


def _cell(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


def read_feature_dump(path) -> List[SlotFeatureVector]:
    """
    Read a feature dump written by write_feature_dump.

    Raises:
        FeatureDumpError on missing columns or non-numeric cells
    """
    try:
        frame = pd.read_csv(path, dtype={'device_key': str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FeatureDumpError(f'unreadable feature dump: {e}')

    missing = [column for column in META_COLUMNS + FEATURE_COLUMNS if column not in frame.columns]
    if missing:
        raise FeatureDumpError(f'feature dump missing column(s): {", ".join(missing)}')

    try:
        numeric = frame[['slot_start', 'width'] + FEATURE_COLUMNS].apply(pd.to_numeric, errors='raise')
    except (ValueError, TypeError) as e:
        raise FeatureDumpError(f'non-numeric value in feature dump: {e}')

    vectors = []
    for device_key, (_, row) in zip(frame['device_key'], numeric.iterrows()):
        features = {FeatureId(column): _cell(row[column]) for column in FEATURE_COLUMNS}
        vectors.append(SlotFeatureVector(
            device_key=str(device_key),
            slot_start=float(row['slot_start']),
            width=float(row['width']),
            features=features,
        ))
    return vectors
