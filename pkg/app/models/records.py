from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Tuple

RUMOUR = 'rumour'
NON_RUMOUR = 'non-rumour'
LABELS = (RUMOUR, NON_RUMOUR)


@dataclass(frozen=True)
class NewsArticle:
    """A trusted news-wire document"""
    id: str
    timestamp: int
    title: str
    text: str


@dataclass(frozen=True)
class Message:
    """One timestamped social-media post from the stream"""
    id: str
    timestamp: int
    text: str
    label: Optional[str] = None
    pos_tags: Optional[Tuple[str, ...]] = None


@dataclass(frozen=True)
class TokenizedDoc:
    doc_id: str
    terms: Tuple[str, ...]
    unique_terms: FrozenSet[str] = field(default=None)

    def __post_init__(self):
        if self.unique_terms is None:
            object.__setattr__(self, 'unique_terms', frozenset(self.terms))

    def __len__(self) -> int:
        return len(self.terms)


@dataclass
class Verdict:
    """Detection outcome for a single message"""
    doc_id: str
    timestamp: int
    rumour_score: float
    label: str
    gold_label: Optional[str] = None
    feature_vector: Optional[List[float]] = None

    @property
    def is_rumour(self) -> bool:
        return self.label == RUMOUR
