"""
Tests for kterm Bloom memory and sub-document vector novelty
"""
from itertools import combinations

import numpy as np
import pytest

from config import default_bloom_seeds
from app.models.bloom_filter import KTERM_LEVELS, KTERM_SEPARATOR, BloomFilter, KtermMemory, NoveltyScores
from app.models.errors import DataError
from app.models.records import TokenizedDoc
from app.models.vector_store import SubDocIndex, window_starts
from app.models.vocabulary import KeywordSet
from app.services.novelty_service import (build_kterm_memory, build_trusted_memory, enumerate_kterms,
                                          insert_document, kterm_novelty, novelty_scores, vector_novelty)
from app.utils.document_processor import tokenize
from app.utils.synthetic import SyntheticCorpusGenerator, SyntheticSpec
from app.utils.text_stats import build_vocabulary, tfidf_vector

BIG_BITS = 2 ** 20


def doc(doc_id, text):
    return tokenize(text, 'whitespace', doc_id)


class TestKterms:
    """Test kterm enumeration"""

    def test_sorted_and_joined(self):
        """Test kterms are sorted combinations joined by the separator"""
        sep = KTERM_SEPARATOR
        assert enumerate_kterms({'b', 'a', 'c'}, 2) == {f"a{sep}b", f"a{sep}c", f"b{sep}c"}
        assert enumerate_kterms(['b', 'a', 'b'], 1) == {'a', 'b'}
        assert enumerate_kterms({'a', 'b'}, 3) == set()

    def test_invalid_length(self):
        """Test that only k = 1..3 is accepted"""
        with pytest.raises(ValueError):
            enumerate_kterms({'a'}, 4)


class TestBloomFilter:
    """Test the bit array filter"""

    def test_no_false_negatives(self):
        """Test every inserted key is reported present"""
        bloom = BloomFilter(4096, 3, default_bloom_seeds(3))
        keys = [f"key-{i}" for i in range(300)]
        bloom.add_many(keys)
        assert bloom.contains_many(keys).all()
        assert bloom.inserted_count == 300

    def test_empty_filter_contains_nothing(self):
        """Test a fresh filter reports nothing and a zero false-positive rate"""
        bloom = BloomFilter(4096, 3, default_bloom_seeds(3))
        assert 'anything' not in bloom
        assert bloom.false_positive_rate() == 0.0

    def test_bytes_roundtrip_preserves_membership(self):
        """Test serialized bits restore the same membership"""
        bloom = BloomFilter(1000, 4, default_bloom_seeds(4))
        bloom.add('storm')
        restored = BloomFilter.from_bytes(1000, 4, default_bloom_seeds(4), 1, bloom.to_bytes())
        assert 'storm' in restored
        assert restored.to_bytes() == bloom.to_bytes()

    def test_bad_parameters(self):
        """Test undersized filters and seed count mismatches"""
        with pytest.raises(DataError):
            BloomFilter(4, 3, default_bloom_seeds(3))
        with pytest.raises(DataError):
            BloomFilter(4096, 3, default_bloom_seeds(2))

    def test_batched_levels_match_single_lookups(self):
        """Test one hashing batch across levels answers like per-filter lookups"""
        memory = KtermMemory(BIG_BITS, 3, default_bloom_seeds(3))
        insert_document(memory, {'fire', 'mill', 'owners'})
        lookups = {k: sorted(enumerate_kterms({'fire', 'mill', 'river', 'owners'}, k)) for k in KTERM_LEVELS}
        batched = memory.contains_levels(lookups)
        for k in KTERM_LEVELS:
            assert batched[k].tolist() == memory.filters[k].contains_many(lookups[k]).tolist()
        assert memory.contains_levels({1: [], 2: [], 3: []})[2].tolist() == []


class TestKtermMemory:
    """Test the three-filter memory"""

    @pytest.mark.parametrize('articles', [0, 1, 25])
    def test_footprint_is_three_filters(self, articles):
        """Test the memory holds exactly 3*m bits whatever was inserted"""
        memory = KtermMemory(BIG_BITS, 3, default_bloom_seeds(3))
        for i in range(articles):
            insert_document(memory, {f"w{i}", f"w{i + 1}", f"w{i + 2}", 'shared'})
        assert memory.footprint_bits() == 3 * BIG_BITS
        assert memory.get_memory_stats()['footprint_bits'] == 3 * BIG_BITS


class TestKtermNovelty:
    """Test unseen-kterm fractions against an exact set"""

    def test_matches_exact_set(self):
        """Test novelty equals the unseen fraction computed on exact sets"""
        news = [doc('n1', "fire at the old mill"), doc('n2', "mill owners deny fire claims")]
        memory = KtermMemory(BIG_BITS, 3, default_bloom_seeds(3))
        exact = {k: set() for k in (1, 2, 3)}
        for article in news:
            insert_document(memory, article.unique_terms)
            for k in exact:
                exact[k] |= enumerate_kterms(article.unique_terms, k)

        message = doc('m', "owners deny fire at the new mill")
        for k in (1, 2, 3):
            kterms = enumerate_kterms(message.unique_terms, k)
            expected = len(kterms - exact[k]) / len(kterms)
            assert kterm_novelty(memory, message.unique_terms, k) == pytest.approx(expected)

    def test_no_kterms_is_not_novel(self):
        """Test a message without kterms of length k scores 0"""
        memory = KtermMemory(BIG_BITS, 3, default_bloom_seeds(3))
        assert kterm_novelty(memory, {'solo'}, 2) == 0.0
        assert kterm_novelty(memory, set(), 1) == 0.0

    def test_never_rises_as_news_arrives(self):
        """Test novelty of a fixed message only falls as articles are inserted"""
        generator = SyntheticCorpusGenerator(SyntheticSpec(seed=5, articles=30, vocabulary_size=300,
                                                           max_article_terms=40))
        news = generator.generate_news()
        message = doc('m', ' '.join(news[3].text.split()[:6] + news[17].text.split()[:6]))
        memory = KtermMemory(BIG_BITS, 3, default_bloom_seeds(3))
        previous = {k: kterm_novelty(memory, message.unique_terms, k) for k in KTERM_LEVELS}
        assert previous == {1: 1.0, 2: 1.0, 3: 1.0}
        for article in news:
            insert_document(memory, doc(article.id, article.text).unique_terms)
            for k in KTERM_LEVELS:
                current = kterm_novelty(memory, message.unique_terms, k)
                assert current <= previous[k]
                previous[k] = current
        assert previous[1] == 0.0

    def test_scores_order(self):
        """Test the six scores come out as all k1..k3 then keyword k1..k3"""
        memory = KtermMemory(BIG_BITS, 3, default_bloom_seeds(3))
        insert_document(memory, {'alpha', 'beta'})
        message = TokenizedDoc('m', ('alpha', 'beta', 'gamma'))
        scores = novelty_scores(memory, message, KeywordSet(('alpha', 'beta')))
        assert scores.all_k1 == pytest.approx(1 / 3)
        assert scores.all_k2 == pytest.approx(2 / 3)
        assert scores.all_k3 == pytest.approx(1.0)
        assert scores.key_k1 == 0.0
        assert scores.key_k2 == 0.0
        assert scores.key_k3 == 0.0
        assert NoveltyScores.from_values(scores.as_list()) == scores

    def test_keywords_outside_the_message(self):
        """Test keyword kterms missing from the message's own kterms are still looked up"""
        memory = KtermMemory(BIG_BITS, 3, default_bloom_seeds(3))
        insert_document(memory, {'alpha', 'delta'})
        message = TokenizedDoc('m', ('alpha', 'beta'))
        scores = novelty_scores(memory, message, KeywordSet(('alpha', 'delta')))
        assert scores.all_k1 == pytest.approx(0.5)
        assert scores.key_k1 == 0.0
        assert scores.key_k2 == 0.0

    def test_window_scope_limits_cooccurrence(self):
        """Test window scope stores only pairs that share a window"""
        terms = ' '.join(f"w{i:02d}" for i in range(30))
        corpus = [doc('n', terms)]
        memory = build_kterm_memory(corpus, BIG_BITS, 3, default_bloom_seeds(3), scope='window', window_length=4)
        assert kterm_novelty(memory, {'w00', 'w03'}, 2) == 0.0
        assert kterm_novelty(memory, {'w00', 'w29'}, 2) == 1.0
        assert kterm_novelty(memory, {'w00', 'w29'}, 1) == 0.0

    def test_article_scope_keeps_all_pairs(self):
        """Test article scope stores pairs across the whole article"""
        terms = ' '.join(f"w{i:02d}" for i in range(30))
        memory = build_kterm_memory([doc('n', terms)], BIG_BITS, 3, default_bloom_seeds(3), scope='article')
        assert kterm_novelty(memory, {'w00', 'w29'}, 2) == 0.0


@pytest.mark.slow
class TestBloomAgainstExactSets:
    """Test the full-size Bloom memory against exact kterm sets"""

    WINDOW = 14

    @pytest.fixture(scope='class')
    def setup(self):
        generator = SyntheticCorpusGenerator(SyntheticSpec(seed=21))
        articles = generator.generate_news()
        news = [doc(article.id, article.text) for article in articles]
        queries = [doc(msg.id, msg.text) for msg in generator.generate_stream(articles, 1000)]
        memory = build_kterm_memory(news, 2 ** 24, 7, default_bloom_seeds(7), scope='window',
                                    window_length=self.WINDOW)
        exact = {k: set() for k in KTERM_LEVELS}
        for article in news:
            for start in window_starts(len(article.terms), self.WINDOW, 1):
                window = sorted(set(article.terms[start:start + self.WINDOW]))
                for k in KTERM_LEVELS:
                    exact[k].update(KTERM_SEPARATOR.join(combo) for combo in combinations(window, k))
        return memory, exact, queries

    def test_lookups_against_exact_sets(self, setup):
        """Test zero false negatives, downward-only novelty error and a bounded false-positive rate"""
        memory, exact, queries = setup
        false_positives = {k: 0 for k in KTERM_LEVELS}
        absent = {k: 0 for k in KTERM_LEVELS}

        for query in queries:
            for k in KTERM_LEVELS:
                keys = sorted(enumerate_kterms(query.unique_terms, k))
                if not keys:
                    continue
                found = memory.filters[k].contains_many(keys)
                truth = np.array([key in exact[k] for key in keys], dtype=bool)
                assert not (truth & ~found).any()
                false_positives[k] += int((found & ~truth).sum())
                absent[k] += int((~truth).sum())
                exact_novelty = float((~truth).sum()) / len(keys)
                assert kterm_novelty(memory, query.unique_terms, k) <= exact_novelty + 1e-12

        # each lookup is held to the analytic rate of the filter it went to
        assert all(absent[k] > 0 for k in KTERM_LEVELS)
        allowed = sum(absent[k] * memory.filters[k].false_positive_rate() for k in KTERM_LEVELS)
        assert sum(false_positives.values()) <= 2 * allowed


class TestSubDocIndex:
    """Test sliding-window vector novelty"""

    def test_window_starts(self):
        """Test window offsets for short, strided and empty articles"""
        assert list(window_starts(5, 14, 1)) == [0]
        assert list(window_starts(20, 14, 3)) == [0, 3, 6]
        assert list(window_starts(0, 3, 1)) == [0]

    def test_identical_window_is_not_novel(self):
        """Test a query equal to one window has novelty 0"""
        corpus = [doc('n1', "a b c d e f g h"), doc('n2', "x y z")]
        vocab = build_vocabulary(corpus)
        index = SubDocIndex.build(corpus, vocab, window_length=3)
        assert len(index) == 6 + 1
        query = tfidf_vector(doc('m', "c d e"), vocab)
        assert vector_novelty(index, query) == pytest.approx(0.0, abs=1e-9)

    def test_matches_brute_force(self):
        """Test the sparse max cosine agrees with pairwise cosines"""
        corpus = [doc('n1', "storm hits coast towns hard"), doc('n2', "coast guard rescues fishermen at dawn")]
        vocab = build_vocabulary(corpus)
        index = SubDocIndex.build(corpus, vocab, window_length=3)
        query = tfidf_vector(doc('m', "guard rescues towns unknownword"), vocab)
        brute = max(query.cosine(vector) for vector in index.vectors)
        assert index.max_similarity(query) == pytest.approx(brute)
        assert vector_novelty(index, query) == pytest.approx(1.0 - brute)

    def test_synthetic_messages_match_brute_force(self):
        """Test 100 messages against a 50-article index within 1e-9 of a brute-force pass"""
        generator = SyntheticCorpusGenerator(SyntheticSpec(seed=8, articles=50, vocabulary_size=1500,
                                                           max_article_terms=80))
        news = generator.generate_news()
        corpus = [doc(article.id, article.text) for article in news]
        vocab = build_vocabulary(corpus)
        index = SubDocIndex.build(corpus, vocab, window_length=14, stride=1)
        windows = [tfidf_vector(TokenizedDoc(article.doc_id, article.terms[start:start + 14]), vocab)
                   for article in corpus for start in window_starts(len(article.terms), 14, 1)]

        for msg in generator.generate_stream(news, 100):
            query = tfidf_vector(doc(msg.id, msg.text), vocab)
            brute = max(query.cosine(window) for window in windows)
            assert vector_novelty(index, query) == pytest.approx(1.0 - brute, abs=1e-9)

    def test_empty_inputs_are_fully_novel(self):
        """Test an empty message or empty index gives novelty 1"""
        corpus = [doc('n1', "a b c")]
        vocab = build_vocabulary(corpus)
        index = SubDocIndex.build(corpus, vocab, window_length=2)
        assert vector_novelty(index, tfidf_vector(doc('m', ""), vocab)) == 1.0
        empty = SubDocIndex(vocab.size, 2, 1, None, [], [])
        assert vector_novelty(empty, tfidf_vector(doc('m', "a"), vocab)) == 1.0

    def test_oov_only_query(self):
        """Test a query made only of unseen terms is fully novel"""
        corpus = [doc('n1', "a b c")]
        vocab = build_vocabulary(corpus)
        index = SubDocIndex.build(corpus, vocab, window_length=2)
        assert vector_novelty(index, tfidf_vector(doc('m', "zz yy"), vocab)) == 1.0

    def test_keep_top_terms_truncates(self):
        """Test stripped sub-documents keep at most the requested terms"""
        corpus = [doc('n1', "a b c d"), doc('n2', "a")]
        vocab = build_vocabulary(corpus)
        index = SubDocIndex.build(corpus, vocab, window_length=4, keep_top_terms=2)
        assert all(len(vector) <= 2 for vector in index.vectors)


class TestTrustedMemory:
    """Test building the whole memory"""

    def test_build(self, tiny_corpus):
        """Test the memory records its articles, window length and scope"""
        memory = build_trusted_memory(tiny_corpus, 'whitespace', 4096, 3, default_bloom_seeds(3), window_length=4)
        stats = memory.get_memory_stats()
        assert stats['news_articles'] == 3
        assert memory.window_length == 4
        assert memory.kterms.inserted_counts()[1] > 0
        assert memory.kterm_scope == 'window'
