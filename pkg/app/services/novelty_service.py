"""
Novelty against the trusted news memory

Two views of the same question, how much of a message the news has not
confirmed: kterm hashing over per-length Bloom filters, and tf-idf
proximity to message-sized news sub-documents.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set

import numpy as np

from app.models.bloom_filter import KTERM_LEVELS, KTERM_SEPARATOR, KtermMemory, NoveltyScores
from app.models.errors import DataError
from app.models.records import TokenizedDoc
from app.models.vector_store import SubDocIndex, window_starts
from app.models.vocabulary import KeywordSet, TfIdfVector, Vocabulary
from app.utils.text_stats import build_vocabulary

logger = logging.getLogger(__name__)


def _check_level(k: int):
    if k not in KTERM_LEVELS:
        raise ValueError(f"kterm length must be one of {KTERM_LEVELS}, got {k}")


def _sorted_kterms(sorted_terms: Sequence[str], k: int) -> List[str]:
    if k == 1:
        return list(sorted_terms)
    return [KTERM_SEPARATOR.join(combo) for combo in combinations(sorted_terms, k)]


def enumerate_kterms(unique_terms: Iterable[str], k: int) -> Set[str]:
    """All size-k combinations, each canonicalized as its sorted terms joined by the separator"""
    _check_level(k)
    return set(_sorted_kterms(sorted(set(unique_terms)), k))


def insert_document(memory: KtermMemory, unique_terms: Iterable[str]) -> KtermMemory:
    terms = sorted(set(unique_terms))
    for k in KTERM_LEVELS:
        memory.filters[k].add_many(_sorted_kterms(terms, k))
    return memory


def _unseen_fraction(present: np.ndarray) -> float:
    if len(present) == 0:
        return 0.0
    return float(len(present) - int(np.count_nonzero(present))) / len(present)


def kterm_novelty(memory: KtermMemory, unique_terms: Iterable[str], k: int) -> float:
    """Fraction of the document's kterms absent from filter k; 0.0 without kterms"""
    _check_level(k)
    keys = _sorted_kterms(sorted(set(unique_terms)), k)
    return _unseen_fraction(memory.filters[k].contains_many(keys))


def novelty_scores(memory: KtermMemory, doc: TokenizedDoc, keywords: KeywordSet) -> NoveltyScores:
    """The six kterm novelty features: k = 1..3 over all terms, then over keywords"""
    terms, keyword_terms = sorted(doc.unique_terms), sorted(set(keywords))
    own = {k: _sorted_kterms(terms, k) for k in KTERM_LEVELS}
    keyword_levels = {k: _sorted_kterms(keyword_terms, k) for k in KTERM_LEVELS}

    # keyword kterms are usually a subset of the message's own kterms
    lookups = {}
    for k in KTERM_LEVELS:
        known = set(own[k])
        lookups[k] = own[k] + [key for key in keyword_levels[k] if key not in known]
    present = memory.contains_levels(lookups)

    all_scores, keyword_scores = [], []
    for k in KTERM_LEVELS:
        all_scores.append(_unseen_fraction(present[k][:len(own[k])]))
        seen = dict(zip(lookups[k], present[k].tolist()))
        keyword_scores.append(_unseen_fraction(np.array([seen[key] for key in keyword_levels[k]], dtype=bool)))

    return NoveltyScores(*all_scores, *keyword_scores)


def build_kterm_memory(corpus: Sequence[TokenizedDoc], num_bits: int, num_hashes: int, seeds: Sequence[int],
                       scope: str = 'window', window_length: int = 14, stride: int = 1) -> KtermMemory:
    """Insert the kterms of every news article.

    ``article`` scope inserts each article's full unique-term set;
    ``window`` scope inserts the kterms of each sliding window, so stored
    co-occurrences never span more than a message-sized stretch of text.
    """
    if scope not in ('window', 'article'):
        raise ValueError(f"Unknown kterm scope '{scope}'")

    memory = KtermMemory(num_bits, num_hashes, seeds)
    for doc in corpus:
        if scope == 'article':
            insert_document(memory, doc.unique_terms)
            continue
        for k in KTERM_LEVELS:
            keys: Set[str] = set()
            for offset in window_starts(len(doc.terms), window_length, stride):
                keys.update(_sorted_kterms(sorted(set(doc.terms[offset:offset + window_length])), k))
            memory.filters[k].add_many(list(keys))

    logger.info(f"Built kterm memory ({scope} scope) from {len(corpus)} articles: "
                f"inserted {memory.inserted_counts()}")
    return memory


def build_subdoc_index(corpus: Sequence[TokenizedDoc], vocab: Vocabulary, window_length: int, stride: int = 1,
                       keep_top_terms: Optional[int] = None) -> SubDocIndex:
    if window_length < 1 or stride < 1:
        raise DataError("window_length and stride must be at least 1")
    return SubDocIndex.build(corpus, vocab, window_length, stride, keep_top_terms)


def vector_novelty(index: SubDocIndex, doc_vector: TfIdfVector) -> float:
    """1 - cosine to the nearest sub-document; 1.0 for an empty index or empty message"""
    if len(index) == 0 or doc_vector.norm == 0.0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - index.max_similarity(doc_vector)))


@dataclass
class TrustedMemory:
    """Everything derived from the news corpus that detection consults"""
    vocab: Vocabulary
    kterms: KtermMemory
    index: SubDocIndex
    tokenizer: str
    kterm_scope: str
    kterm_stride: int

    @property
    def window_length(self) -> int:
        return self.index.window_length

    def get_memory_stats(self) -> Dict[str, Any]:
        return {
            'vocabulary_size': self.vocab.size,
            'news_articles': self.vocab.total_docs,
            'tokenizer': self.tokenizer,
            'kterm_scope': self.kterm_scope,
            'kterm_stride': self.kterm_stride,
            'kterms': self.kterms.get_memory_stats(),
            'index': self.index.get_collection_stats(),
        }


def build_trusted_memory(corpus: Sequence[TokenizedDoc], tokenizer: str, num_bits: int, num_hashes: int,
                         seeds: Sequence[int], window_length: int, stride: int = 1,
                         keep_top_terms: Optional[int] = None, kterm_scope: str = 'window',
                         kterm_stride: int = 1) -> TrustedMemory:
    vocab = build_vocabulary(corpus)
    kterms = build_kterm_memory(corpus, num_bits, num_hashes, seeds, kterm_scope, window_length, kterm_stride)
    index = build_subdoc_index(corpus, vocab, window_length, stride, keep_top_terms)
    return TrustedMemory(vocab=vocab, kterms=kterms, index=index, tokenizer=tokenizer,
                         kterm_scope=kterm_scope, kterm_stride=kterm_stride)
