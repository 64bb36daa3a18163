import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from app.models.errors import DataError
from app.models.records import TokenizedDoc
from app.models.vocabulary import TfIdfVector, Vocabulary
from app.utils.text_stats import tfidf_vector

logger = logging.getLogger(__name__)


def window_starts(length: int, window_length: int, stride: int) -> range:
    """Offsets 0, stride, 2*stride, ... while offset < max(1, length - L + 1)"""
    return range(0, max(1, length - window_length + 1), stride)


class SubDocIndex:
    """Sliding-window sub-documents of the news corpus as tf-idf vectors.

    Windows are message-sized so that cosine proximity between a short post
    and a long article stays meaningful. Rows are stored L2-normalized in a
    column-major sparse matrix so a query touches only its own terms.
    """

    def __init__(self, vocab_size: int, window_length: int, stride: int, keep_top_terms: Optional[int],
                 refs: Sequence[Tuple[str, int]], vectors: Sequence[TfIdfVector]):
        if window_length < 1 or stride < 1:
            raise DataError("window_length and stride must be positive")
        if len(refs) != len(vectors):
            raise DataError("Every window needs exactly one vector")
        for (article_id, offset), vector in zip(refs, vectors):
            if vector.norm <= 0.0:
                raise DataError(f"Window {article_id}@{offset} has a zero-norm vector")
            if offset % stride:
                raise DataError(f"Window offset {offset} of {article_id} is not a multiple of stride {stride}")

        self.vocab_size = vocab_size
        self.window_length = window_length
        self.stride = stride
        self.keep_top_terms = keep_top_terms
        self.refs: List[Tuple[str, int]] = list(refs)
        self.vectors: List[TfIdfVector] = list(vectors)
        self._by_term = self._normalized_matrix().tocsc()

    @classmethod
    def build(cls, corpus: Sequence[TokenizedDoc], vocab: Vocabulary, window_length: int, stride: int = 1,
              keep_top_terms: Optional[int] = None) -> 'SubDocIndex':
        refs, vectors = [], []
        for doc in corpus:
            for offset in window_starts(len(doc.terms), window_length, stride):
                window = TokenizedDoc(doc.doc_id, doc.terms[offset:offset + window_length])
                vector = tfidf_vector(window, vocab)
                if keep_top_terms is not None:
                    vector = vector.truncate(keep_top_terms)
                if vector.norm > 0.0:
                    refs.append((doc.doc_id, offset))
                    vectors.append(vector)

        logger.info(f"Indexed {len(vectors)} sub-documents (L={window_length}, stride={stride}, "
                    f"keep_top_terms={keep_top_terms}) from {len(corpus)} articles")
        return cls(vocab.size, window_length, stride, keep_top_terms, refs, vectors)

    def __len__(self) -> int:
        return len(self.vectors)

    def raw_matrix(self) -> sp.csr_matrix:
        """Unnormalized window weights, one row per window"""
        indptr = [0]
        indices, data = [], []
        for vector in self.vectors:
            for term_id, weight in sorted(vector.weights.items()):
                indices.append(term_id)
                data.append(weight)
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(self.vectors), max(self.vocab_size, 1))
        )

    def _normalized_matrix(self) -> sp.csr_matrix:
        matrix = self.raw_matrix()
        norms = np.array([vector.norm for vector in self.vectors], dtype=np.float64)
        if len(norms):
            matrix = sp.diags(1.0 / norms) @ matrix
        return sp.csr_matrix(matrix)

    def similarities(self, doc_vector: TfIdfVector) -> np.ndarray:
        """Cosine of the query against every window"""
        if not self.vectors or doc_vector.norm == 0.0:
            return np.zeros(len(self.vectors), dtype=np.float64)
        known = [(term_id, weight) for term_id, weight in doc_vector.weights.items() if term_id < self.vocab_size]
        if not known:
            return np.zeros(len(self.vectors), dtype=np.float64)
        ids = np.array([term_id for term_id, _ in known], dtype=np.int64)
        weights = np.array([weight for _, weight in known], dtype=np.float64) / doc_vector.norm
        return np.asarray(self._by_term[:, ids] @ weights).ravel()

    def max_similarity(self, doc_vector: TfIdfVector) -> float:
        scores = self.similarities(doc_vector)
        return float(scores.max()) if len(scores) else 0.0

    def get_collection_stats(self) -> Dict[str, Any]:
        """Get index statistics"""
        return {
            'total_windows': len(self.vectors),
            'articles': len({article_id for article_id, _ in self.refs}),
            'window_length': self.window_length,
            'stride': self.stride,
            'keep_top_terms': self.keep_top_terms,
            'stored_weights': sum(len(vector) for vector in self.vectors),
        }
