import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from app.models.errors import ConfigError
from app.models.vocabulary import TfIdfVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PfConfig:
    """Buffer capacity k and the rumour-score cutoff for admission"""
    capacity: int = 100
    threshold: float = 0.0

    def __post_init__(self):
        if self.capacity < 0:
            raise ConfigError("Pseudo-feedback capacity must not be negative")


@dataclass(frozen=True)
class StackedBuffer:
    """Buffered vectors flattened into parallel arrays, one row per entry"""
    rows: np.ndarray
    ids: np.ndarray
    weights: np.ndarray
    norms: np.ndarray


class PfBuffer:
    """The k most recent pseudo-rumours; oldest evicted first.

    Single-owner state: the detection loop reads and updates it strictly in
    stream order.
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ConfigError("Pseudo-feedback capacity must not be negative")
        self.capacity = capacity
        self.entries: Deque[Tuple[str, TfIdfVector]] = deque(maxlen=capacity)
        self.admitted_total = 0
        self._stacked: Optional[StackedBuffer] = None

    def __len__(self) -> int:
        return len(self.entries)

    def doc_ids(self) -> List[str]:
        return [doc_id for doc_id, _ in self.entries]

    def append(self, doc_id: str, vector: TfIdfVector):
        if self.capacity == 0:
            return
        self.entries.append((doc_id, vector))
        self.admitted_total += 1
        self._stacked = None

    def clear(self):
        self.entries.clear()
        self._stacked = None

    def stacked(self) -> StackedBuffer:
        """Rebuilt lazily after the buffer changes"""
        if self._stacked is None:
            arrays = [vector.arrays for _, vector in self.entries]
            self._stacked = StackedBuffer(
                rows=np.repeat(np.arange(len(arrays)), [len(ids) for ids, _ in arrays]),
                ids=np.concatenate([ids for ids, _ in arrays]),
                weights=np.concatenate([weights for _, weights in arrays]),
                norms=np.array([vector.norm for _, vector in self.entries], dtype=np.float64),
            )
        return self._stacked

    def get_buffer_stats(self) -> Dict[str, int]:
        return {'capacity': self.capacity, 'size': len(self.entries), 'admitted_total': self.admitted_total}


def pf_feature(buffer: PfBuffer, doc_vector: TfIdfVector) -> float:
    """Highest cosine between the message and any buffered pseudo-rumour"""
    if not buffer.entries or doc_vector.norm == 0.0:
        return 0.0
    ids, weights = doc_vector.arrays
    stacked = buffer.stacked()

    # match every buffered term id against the message's sorted ids
    slots = np.minimum(np.searchsorted(ids, stacked.ids), len(ids) - 1)
    products = np.where(ids[slots] == stacked.ids, weights[slots] * stacked.weights, 0.0)
    dots = np.bincount(stacked.rows, weights=products, minlength=len(stacked.norms))
    cosines = np.divide(dots, stacked.norms, out=np.zeros_like(dots), where=stacked.norms > 0.0)
    best = float(cosines.max()) / doc_vector.norm
    return min(1.0, max(0.0, best))


def maybe_admit(buffer: PfBuffer, doc_id: str, doc_vector: TfIdfVector, rumour_score: float,
                cfg: PfConfig) -> PfBuffer:
    if rumour_score > cfg.threshold and doc_vector.norm > 0.0:
        buffer.append(doc_id, doc_vector)
        logger.debug(f"Admitted {doc_id} to pseudo-feedback buffer (score {rumour_score:.6f})")
    return buffer
