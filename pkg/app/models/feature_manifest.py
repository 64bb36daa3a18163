import csv
import hashlib
import io
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from app.models.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

FEATURE_COUNT = 58
CONTEXT_SIZE = 51
NOVELTY_START = 51
PF_INDEX = 57
KINDS = ('count', 'normalized', 'flag', 'novelty', 'pseudo_feedback')
MANIFEST_HEADER = ['index', 'name', 'category', 'kind']


@dataclass(frozen=True)
class FeatureSpec:
    index: int
    name: str
    category: str
    kind: str


class FeatureManifest:
    """The ordered, versioned list of the 58 feature slots.

    The sha256 of the manifest file is stamped on every feature vector and
    model, so a model can never score vectors laid out differently.
    """

    def __init__(self, entries: List[FeatureSpec], manifest_hash: str):
        if len(entries) != FEATURE_COUNT:
            raise DataError(f"Feature manifest must list {FEATURE_COUNT} features, found {len(entries)}")
        for position, entry in enumerate(entries):
            if entry.index != position:
                raise DataError(f"Feature manifest row {position} carries index {entry.index}")
            if entry.kind not in KINDS:
                raise DataError(f"Feature '{entry.name}' has unknown kind '{entry.kind}'")
            expected_kind = self._expected_kind(position)
            if expected_kind and entry.kind != expected_kind:
                raise DataError(f"Feature {position} must be of kind '{expected_kind}', got '{entry.kind}'")
        if len({entry.name for entry in entries}) != len(entries):
            raise DataError("Feature manifest names must be unique")

        self.entries = list(entries)
        self.manifest_hash = manifest_hash

    @staticmethod
    def _expected_kind(position: int):
        if position == PF_INDEX:
            return 'pseudo_feedback'
        if position >= NOVELTY_START:
            return 'novelty'
        return None

    @classmethod
    def from_bytes(cls, raw: bytes) -> 'FeatureManifest':
        manifest_hash = hashlib.sha256(raw).hexdigest()
        reader = csv.reader(io.StringIO(raw.decode('utf-8')))
        rows = [row for row in reader if row]
        if not rows or [cell.strip() for cell in rows[0]] != MANIFEST_HEADER:
            raise DataError(f"Feature manifest header must be {','.join(MANIFEST_HEADER)}")
        entries = []
        for line_no, row in enumerate(rows[1:], start=2):
            if len(row) != 4:
                raise DataError(f"Feature manifest line {line_no}: expected 4 columns, got {len(row)}")
            try:
                index = int(row[0])
            except ValueError as e:
                raise DataError(f"Feature manifest line {line_no}: bad index '{row[0]}'") from e
            entries.append(FeatureSpec(index, row[1].strip(), row[2].strip(), row[3].strip()))
        return cls(entries, manifest_hash)

    @classmethod
    def load(cls, path: str) -> 'FeatureManifest':
        with open(path, 'rb') as handle:
            manifest = cls.from_bytes(handle.read())
        logger.info(f"Loaded feature manifest {path} (sha256 {manifest.manifest_hash[:12]})")
        return manifest

    @property
    def names(self) -> List[str]:
        return [entry.name for entry in self.entries]

    @property
    def categories(self) -> List[str]:
        """Distinct categories in manifest order"""
        return list(dict.fromkeys(entry.category for entry in self.entries))

    def category_of(self, index: int) -> str:
        return self.entries[index].category

    def indices_for(self, category: str) -> List[int]:
        wanted = category.strip().lower()
        indices = [entry.index for entry in self.entries if entry.category.lower() == wanted]
        if not indices:
            raise ConfigError(f"Unknown feature group '{category}'; known groups: {', '.join(self.categories)}")
        return indices

    def group_indices(self, group: str) -> Tuple[int, ...]:
        """Columns of a group; ``a+b`` names the union of several categories"""
        columns = set()
        for part in group.split('+'):
            columns.update(self.indices_for(part))
        return tuple(sorted(columns))

    def category_sizes(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for entry in self.entries:
            counts[entry.category] = counts.get(entry.category, 0) + 1
        return counts


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """58 finite values in manifest order, stamped with the manifest hash"""
    values: np.ndarray
    manifest_hash: str

    def __post_init__(self):
        if self.values.shape != (FEATURE_COUNT,):
            raise DataError(f"FeatureVector must have {FEATURE_COUNT} values, got shape {self.values.shape}")

    def __len__(self) -> int:
        return FEATURE_COUNT

    def __getitem__(self, index: int) -> float:
        return float(self.values[index])

    def with_pf(self, pf: float) -> 'FeatureVector':
        values = self.values.copy()
        values[PF_INDEX] = pf
        return FeatureVector(values, self.manifest_hash)
