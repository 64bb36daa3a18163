"""
Tests for vocabulary, idf, tf-idf vectors and keywords
"""
import math

import pytest

from app.models.errors import DataError
from app.models.records import TokenizedDoc
from app.models.vocabulary import KeywordSet, TfIdfVector, Vocabulary
from app.utils.text_stats import (average_message_length, build_vocabulary, idf, tfidf_vector, top_keywords)


def doc(*terms):
    return TokenizedDoc('d', tuple(terms))


class TestVocabulary:
    """Test document frequencies and term ids"""

    def test_ids_follow_term_order(self):
        """Test term ids follow sorted term order"""
        vocab = build_vocabulary([doc('b', 'a'), doc('c', 'a', 'a')])
        assert [term for term, _, _ in vocab.terms()] == ['a', 'b', 'c']
        assert vocab.term_id('c') == 2
        assert vocab.doc_freq('a') == 2
        assert vocab.total_docs == 2

    def test_idf_formula(self):
        """Test the smoothed idf for seen and unseen terms"""
        vocab = build_vocabulary([doc('a', 'b'), doc('a')])
        assert idf(vocab, 'a') == pytest.approx(math.log(3 / 3) + 1)
        assert idf(vocab, 'b') == pytest.approx(math.log(3 / 2) + 1)
        assert idf(vocab, 'zzz') == pytest.approx(math.log(3) + 1)

    def test_unseen_terms_hash_above_vocabulary(self):
        """Test unseen terms get stable ids past the vocabulary"""
        vocab = build_vocabulary([doc('a')])
        assert vocab.feature_id('a') == 0
        assert vocab.feature_id('unseen') >= vocab.size
        assert vocab.feature_id('unseen') == vocab.feature_id('unseen')

    def test_text_form(self):
        """Test the text form loads back to an equal vocabulary"""
        vocab = build_vocabulary([doc('x', 'y'), doc('y')])
        assert Vocabulary.from_text(vocab.to_text()) == vocab

    def test_empty_corpus(self):
        """Test an empty corpus is a data error"""
        with pytest.raises(DataError):
            build_vocabulary([])

    def test_rejects_sparse_ids(self):
        """Test term ids must be contiguous"""
        with pytest.raises(DataError):
            Vocabulary({'a': (0, 1), 'b': (2, 1)}, total_docs=1)


class TestTfIdf:
    """Test sparse tf-idf vectors"""

    def test_raw_count_times_idf(self):
        """Test weights are raw counts times idf"""
        vocab = build_vocabulary([doc('a', 'b'), doc('a')])
        vector = tfidf_vector(doc('b', 'b', 'a'), vocab)
        b_weight = 2 * (math.log(3 / 2) + 1)
        assert vector.weights[vocab.term_id('b')] == pytest.approx(b_weight)
        assert vector.weights[vocab.term_id('a')] == pytest.approx(1.0)
        assert vector.norm == pytest.approx(math.sqrt(b_weight ** 2 + 1.0))

    def test_empty_document(self):
        """Test an empty document gives the empty vector"""
        vocab = build_vocabulary([doc('a')])
        assert tfidf_vector(doc(), vocab) == TfIdfVector.empty()

    def test_cosine(self):
        """Test cosine similarity, including against the empty vector"""
        left = TfIdfVector.from_weights({0: 1.0, 1: 1.0})
        right = TfIdfVector.from_weights({1: 2.0})
        assert left.cosine(right) == pytest.approx(1 / math.sqrt(2))
        assert left.cosine(TfIdfVector.empty()) == 0.0

    def test_truncate_keeps_heaviest(self):
        """Test truncation keeps the heaviest terms"""
        vector = TfIdfVector.from_weights({0: 1.0, 1: 3.0, 2: 2.0})
        assert set(vector.truncate(2).weights) == {1, 2}

    def test_arrays_are_sorted_by_id(self):
        """Test the array view lists term ids in ascending order with their weights"""
        vector = TfIdfVector.from_weights({7: 1.5, 2: 0.5, 4: 2.0})
        ids, weights = vector.arrays
        assert ids.tolist() == [2, 4, 7]
        assert weights.tolist() == [0.5, 2.0, 1.5]
        assert TfIdfVector.empty().arrays[0].size == 0


class TestKeywords:
    """Test keyword selection"""

    def test_order_and_ties(self):
        """Test keywords sort by weight, then by term"""
        vocab = build_vocabulary([doc('common', 'rare'), doc('common'), doc('common', 'other')])
        keywords = top_keywords(doc('common', 'rare', 'other', 'zeta'), vocab)
        # unseen 'zeta' has the highest idf; rare and other tie and sort by term
        assert keywords.terms == ('zeta', 'other', 'rare', 'common')

    def test_at_most_ten(self):
        """Test at most ten keywords are kept"""
        vocab = build_vocabulary([doc('x')])
        terms = [f"t{i:02d}" for i in range(15)]
        assert len(top_keywords(doc(*terms), vocab)) == KeywordSet.MAX_KEYWORDS

    def test_keyword_set_rejects_duplicates(self):
        """Test a keyword set cannot repeat a term"""
        with pytest.raises(DataError):
            KeywordSet(('a', 'a'))


class TestAverageLength:
    """Test the rounded average message length"""

    def test_rounds_half_up(self):
        """Test the average length rounds half up"""
        assert average_message_length([doc('a'), doc('a', 'b')]) == 2

    def test_at_least_one(self):
        """Test the average length is at least one"""
        assert average_message_length([doc(), doc()]) == 1

    def test_empty_stream(self):
        """Test an empty stream is a data error"""
        with pytest.raises(DataError):
            average_message_length([])
