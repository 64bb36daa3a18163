"""Corpus-level term statistics: document frequencies, idf, tf-idf and keywords."""

import logging
import math
from collections import Counter
from typing import Dict, Sequence

from app.models.errors import DataError
from app.models.records import TokenizedDoc
from app.models.vocabulary import KeywordSet, TfIdfVector, Vocabulary

logger = logging.getLogger(__name__)


def build_vocabulary(corpus: Sequence[TokenizedDoc]) -> Vocabulary:
    """Count document frequencies; ids follow lexicographic term order"""
    if not corpus:
        raise DataError("Cannot build a vocabulary from an empty corpus")

    doc_freq = Counter()
    for doc in corpus:
        doc_freq.update(doc.unique_terms)

    entries = {term: (term_id, doc_freq[term]) for term_id, term in enumerate(sorted(doc_freq))}
    logger.info(f"Built vocabulary of {len(entries)} terms over {len(corpus)} documents")
    return Vocabulary(entries, total_docs=len(corpus))


def idf(vocab: Vocabulary, term: str) -> float:
    """ln((N + 1) / (df + 1)) + 1, with df = 0 for unseen terms"""
    return vocab.idf(term)


def term_weights(doc: TokenizedDoc, vocab: Vocabulary) -> Dict[str, float]:
    """Raw term count times idf, keyed by term"""
    return {term: count * vocab.idf(term) for term, count in Counter(doc.terms).items()}


def tfidf_vector(doc: TokenizedDoc, vocab: Vocabulary) -> TfIdfVector:
    if not doc.terms:
        return TfIdfVector.empty()
    weights = {vocab.feature_id(term): weight for term, weight in term_weights(doc, vocab).items()}
    return TfIdfVector.from_weights(weights)


def top_keywords(doc: TokenizedDoc, vocab: Vocabulary, limit: int = KeywordSet.MAX_KEYWORDS) -> KeywordSet:
    ranked = sorted(term_weights(doc, vocab).items(), key=lambda item: (-item[1], item[0]))
    return KeywordSet(tuple(term for term, _ in ranked[:limit]))


def average_message_length(stream: Sequence[TokenizedDoc]) -> int:
    """Rounded mean term count, at least 1"""
    if not stream:
        raise DataError("Cannot average the length of an empty stream")
    mean = sum(len(doc.terms) for doc in stream) / len(stream)
    return max(1, math.floor(mean + 0.5))
