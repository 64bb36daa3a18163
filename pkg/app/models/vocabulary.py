import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, Optional, Tuple

import mmh3
import numpy as np

from app.models.errors import DataError

VOCABULARY_HEADER = '# rumour-vocabulary v1'
OOV_HASH_SEED = 0x5EED


class Vocabulary:
    """Document frequencies and dense term ids over a reference collection.

    Immutable after construction; safe to share between threads.
    """

    def __init__(self, entries: Dict[str, Tuple[int, int]], total_docs: int):
        if total_docs < 0:
            raise DataError("total_docs must not be negative")
        ids = sorted(term_id for term_id, _ in entries.values())
        if ids != list(range(len(entries))):
            raise DataError("Vocabulary term ids must be dense in [0, size)")
        for term, (_, doc_freq) in entries.items():
            if doc_freq < 1 or doc_freq > total_docs:
                raise DataError(f"Invalid document frequency {doc_freq} for term '{term}'")

        self._entries = dict(entries)
        self.total_docs = total_docs
        self._unseen_idf = math.log((total_docs + 1) / 1) + 1
        self._idf_by_id = np.empty(len(entries), dtype=np.float64)
        for term_id, doc_freq in self._entries.values():
            self._idf_by_id[term_id] = math.log((total_docs + 1) / (doc_freq + 1)) + 1

    @property
    def size(self) -> int:
        return len(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, term: str) -> bool:
        return term in self._entries

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vocabulary) and self.total_docs == other.total_docs
                and self._entries == other._entries)

    def term_id(self, term: str) -> Optional[int]:
        entry = self._entries.get(term)
        return entry[0] if entry else None

    def doc_freq(self, term: str) -> int:
        entry = self._entries.get(term)
        return entry[1] if entry else 0

    def idf(self, term: str) -> float:
        entry = self._entries.get(term)
        if entry is None:
            return self._unseen_idf
        return float(self._idf_by_id[entry[0]])

    def feature_id(self, term: str) -> int:
        """Vector coordinate for a term; unseen terms hash above the vocabulary range"""
        entry = self._entries.get(term)
        if entry is not None:
            return entry[0]
        return self.size + mmh3.hash(term, OOV_HASH_SEED, signed=False)

    def terms(self) -> Iterable[Tuple[str, int, int]]:
        """(term, id, df) in id order"""
        for term, (term_id, doc_freq) in sorted(self._entries.items(), key=lambda item: item[1][0]):
            yield term, term_id, doc_freq

    def to_text(self) -> str:
        lines = [f"{VOCABULARY_HEADER} total_docs={self.total_docs}"]
        lines.extend(f"{term}\t{term_id}\t{doc_freq}" for term, term_id, doc_freq in self.terms())
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text: str) -> 'Vocabulary':
        lines = text.splitlines()
        if not lines or not lines[0].startswith(VOCABULARY_HEADER):
            raise DataError("Missing vocabulary header")
        try:
            total_docs = int(lines[0].rsplit('total_docs=', 1)[1])
            entries = {}
            for line in lines[1:]:
                if not line:
                    continue
                term, term_id, doc_freq = line.split('\t')
                entries[term] = (int(term_id), int(doc_freq))
        except (IndexError, ValueError) as e:
            raise DataError(f"Malformed vocabulary text: {e}") from e
        return cls(entries, total_docs)


@dataclass(frozen=True)
class TfIdfVector:
    """Sparse tf-idf weights keyed by term id, with their Euclidean norm"""
    weights: Dict[int, float]
    norm: float

    @classmethod
    def from_weights(cls, weights: Dict[int, float]) -> 'TfIdfVector':
        kept = {term_id: weight for term_id, weight in weights.items() if weight != 0.0}
        norm = math.sqrt(math.fsum(weight * weight for weight in kept.values()))
        return cls(weights=kept, norm=norm)

    @classmethod
    def empty(cls) -> 'TfIdfVector':
        return cls(weights={}, norm=0.0)

    def __len__(self) -> int:
        return len(self.weights)

    @cached_property
    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Term ids in ascending order and their weights"""
        ids = np.fromiter(self.weights.keys(), dtype=np.int64, count=len(self.weights))
        values = np.fromiter(self.weights.values(), dtype=np.float64, count=len(self.weights))
        order = np.argsort(ids)
        return ids[order], values[order]

    def dot(self, other: 'TfIdfVector') -> float:
        small, large = (self.weights, other.weights) if len(self.weights) <= len(other.weights) \
            else (other.weights, self.weights)
        return math.fsum(weight * large[term_id] for term_id, weight in small.items() if term_id in large)

    def cosine(self, other: 'TfIdfVector') -> float:
        if self.norm == 0.0 or other.norm == 0.0:
            return 0.0
        return self.dot(other) / (self.norm * other.norm)

    def truncate(self, top_n: int) -> 'TfIdfVector':
        """Keep the top-n weights (ties by ascending id) and renormalize"""
        if len(self.weights) <= top_n:
            return self
        ranked = sorted(self.weights.items(), key=lambda item: (-item[1], item[0]))[:top_n]
        return TfIdfVector.from_weights(dict(ranked))


@dataclass(frozen=True)
class KeywordSet:
    """At most ten distinct terms ordered by descending tf-idf"""
    terms: Tuple[str, ...]

    MAX_KEYWORDS = 10

    def __post_init__(self):
        if len(self.terms) > self.MAX_KEYWORDS:
            raise DataError(f"KeywordSet holds at most {self.MAX_KEYWORDS} terms")
        if len(set(self.terms)) != len(self.terms):
            raise DataError("KeywordSet terms must be distinct")

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)
