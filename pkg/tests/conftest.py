"""
Shared fixtures: tiny hand-written corpora and a small seeded synthetic corpus
"""
import os
import sys

import pytest

# Add project root to path
ROOT = os.path.join(os.path.dirname(__file__), '..')
sys.path.insert(0, ROOT)

from config import default_bloom_seeds  # noqa: E402
from app.models.feature_manifest import FeatureManifest  # noqa: E402
from app.models.records import Message  # noqa: E402
from app.services.feature_service import FeatureExtractor  # noqa: E402
from app.services.novelty_service import build_trusted_memory  # noqa: E402
from app.utils.document_processor import tokenize  # noqa: E402
from app.utils.lexicons import LexiconPack  # noqa: E402
from app.utils.synthetic import SyntheticCorpusGenerator, SyntheticSpec  # noqa: E402

DATA_DIR = os.path.join(ROOT, 'data')
MANIFEST_PATH = os.path.join(DATA_DIR, 'feature_manifest.csv')
LEXICON_DIR = os.path.join(DATA_DIR, 'lexicons')

TINY_NEWS = [
    ('n1', "Officials confirm the bridge reopens on monday after repairs"),
    ('n2', "The city council approves a new budget for public schools"),
    ('n3', "Heavy rain expected across the coast this weekend"),
]

SMALL_BITS = 2 ** 16
SMALL_HASHES = 3


def make_message(doc_id, text, timestamp=0, label=None, pos_tags=None):
    return Message(id=doc_id, timestamp=timestamp, text=text, label=label, pos_tags=pos_tags)


@pytest.fixture(scope='session')
def manifest():
    return FeatureManifest.load(MANIFEST_PATH)


@pytest.fixture(scope='session')
def lexicons():
    return LexiconPack.load(LEXICON_DIR)


@pytest.fixture
def tiny_corpus():
    return [tokenize(text, 'whitespace', doc_id) for doc_id, text in TINY_NEWS]


@pytest.fixture
def tiny_memory(tiny_corpus):
    """Article-scope memory over three short articles; rebuilt per test so insertions never leak"""
    return build_trusted_memory(tiny_corpus, 'whitespace', SMALL_BITS, SMALL_HASHES,
                                default_bloom_seeds(SMALL_HASHES), window_length=5, kterm_scope='article')


@pytest.fixture
def tiny_extractor(tiny_memory, lexicons, manifest):
    return FeatureExtractor(tiny_memory, lexicons, manifest)


@pytest.fixture(scope='session')
def small_synthetic():
    spec = SyntheticSpec(seed=3, articles=40, messages=160, vocabulary_size=800, max_article_terms=60)
    return SyntheticCorpusGenerator(spec).generate()


@pytest.fixture(scope='session')
def small_synthetic_memory(small_synthetic):
    corpus = [tokenize(article.text, 'whitespace', article.id) for article in small_synthetic.news]
    return build_trusted_memory(corpus, 'whitespace', 2 ** 21, 5, default_bloom_seeds(5), window_length=14)


@pytest.fixture(scope='session')
def small_synthetic_extractor(small_synthetic_memory, lexicons, manifest):
    return FeatureExtractor(small_synthetic_memory, lexicons, manifest)
