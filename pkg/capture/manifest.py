"""Device manifest CSV (mac,name,label[,split])."""

import logging
from typing import Union

import pandas as pd

from capture.records import DeviceManifest, Label, ManifestEntry, ManifestError, Split
from utils.protocol_mappings import canonical_mac

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ('mac', 'name', 'label')


def load_manifest(path_or_buffer: Union[str, object]) -> DeviceManifest:
    """
    Load a device manifest.

    Args:
        path_or_buffer: CSV path or text buffer with header mac,name,label and an
            optional split column (seen/unseen)

    Returns:
        DeviceManifest with canonical MACs

    Raises:
        ManifestError on missing columns, bad MACs, bad labels or duplicates
    """
    try:
        frame = pd.read_csv(path_or_buffer, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ManifestError(f'unreadable manifest: {e}')

    frame.columns = [str(column).strip().lower() for column in frame.columns]
    missing = [column for column in REQUIRED_COLUMNS if column not in frame.columns]
    if missing:
        raise ManifestError(f'manifest missing column(s): {", ".join(missing)}')

    entries = []
    for row_no, row in enumerate(frame.itertuples(index=False), 2):
        try:
            mac = canonical_mac(row.mac)
            label = Label.parse(row.label)
            split_text = getattr(row, 'split', '') or Split.SEEN.value
            split = Split(split_text.strip().lower())
        except ValueError as e:
            raise ManifestError(f'manifest row {row_no}: {e}')
        entries.append(ManifestEntry(mac=mac, name=row.name.strip(), label=label, split=split))

    manifest = DeviceManifest(entries=tuple(entries))
    logger.info('loaded manifest with %d devices', len(manifest))
    return manifest
