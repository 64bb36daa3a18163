"""
Feature extraction

Turns a message into the 58-slot feature vector: 51 context features from
its surface text, lexicons and part-of-speech tags, six novelty scores
against the trusted memory, and the pseudo-feedback slot filled in by the
detection loop.
"""

import logging
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from app.models.bloom_filter import NoveltyScores
from app.models.errors import DataError, FeatureError
from app.models.feature_manifest import (CONTEXT_SIZE, FEATURE_COUNT, NOVELTY_START, PF_INDEX, FeatureManifest,
                                         FeatureVector)
from app.models.records import Message, TokenizedDoc
from app.models.vocabulary import KeywordSet, TfIdfVector, Vocabulary
from app.services.novelty_service import TrustedMemory, novelty_scores, vector_novelty
from app.utils.document_processor import get_tokenizer
from app.utils.lexicons import LexiconPack, LexiconTagger
from app.utils.text_stats import term_weights, tfidf_vector, top_keywords

logger = logging.getLogger(__name__)

_POS_COUNTED = ('verb', 'noun', 'adjective', 'quantity', 'time')
_SENTIMENT = ('strong_pos', 'weak_pos', 'strong_neg', 'weak_neg')
_EMOTIONS = ('positive', 'negative', 'sad', 'anxious', 'surprised')

CONTEXT_FEATURE_NAMES: List[str] = (
    ['exclamation_count', 'question_count', 'period_count', 'comma_count',
     'multi_exclamation_count', 'multi_question_count', 'has_interrobang', 'has_ellipsis']
    + [f"{tag}_count" for tag in _POS_COUNTED] + [f"{tag}_ratio" for tag in _POS_COUNTED]
    + [f"{name}_count" for name in _SENTIMENT] + [f"{name}_degree" for name in _SENTIMENT]
    + [f"emotion_{name}_degree" for name in _EMOTIONS] + [f"has_emotion_{name}" for name in _EMOTIONS]
    + ['extreme_count', 'extreme_degree']
    + ['hashtag_count', 'has_hashtag', 'mention_count', 'has_mention', 'has_repost_marker', 'emoticon_count']
    + ['char_length', 'token_count', 'unique_token_count', 'type_token_ratio']
    + ['url_count', 'has_url', 'has_picture_marker']
)

URL_PATTERN = re.compile(r'(?:https?://|www\.)\S+', re.IGNORECASE)
HASHTAG_PATTERN = re.compile(r'#[^\s#]+#?')
MENTION_PATTERN = re.compile(r'(?<![\w@])@\w+')
_EXCLAMATION = re.compile(r'[!！]')
_QUESTION = re.compile(r'[?？]')
_PERIOD = re.compile(r'[.。]')
_COMMA = re.compile(r'[,，、]')
_MULTI_EXCLAMATION = re.compile(r'[!！]{2,}')
_MULTI_QUESTION = re.compile(r'[?？]{2,}')
_INTERROBANG = re.compile(r'[?？][!！]|[!！][?？]')
_ELLIPSIS = re.compile(r'\.\.\.|…|。。。')
_REPOST = re.compile(r'(?:^|\s)(?:rt|via)\s*@|//@|转发|\brepost\b', re.IGNORECASE)
_EMOTICON = re.compile(r"(?<!\w)[:;=][\-']?[)(dDpP](?!\w)|<3|\[[^\[\]\s]{1,8}\]|[\U0001F300-\U0001FAFF\u2600-\u27BF]")
_PICTURE = re.compile(r'\.(?:jpe?g|png|gif)\b|pic\.twitter\.com|\[图片\]|分享图片', re.IGNORECASE)


def _ratio(count: int, total: int) -> float:
    return count / total if total else 0.0


def context_features(msg: Message, doc: TokenizedDoc, tags: Sequence[str], lexicons: LexiconPack) -> np.ndarray:
    """The 51 context features in manifest order"""
    if len(tags) != len(doc.terms):
        raise FeatureError(f"POS tags ({len(tags)}) do not align with {len(doc.terms)} terms")

    text = msg.text or ''
    bare = URL_PATTERN.sub(' ', text)
    terms = doc.terms
    total = len(terms)
    values: List[float] = []

    # punctuation, counted with URLs removed
    values += [
        len(_EXCLAMATION.findall(bare)),
        len(_QUESTION.findall(bare)),
        len(_PERIOD.findall(bare)),
        len(_COMMA.findall(bare)),
        len(_MULTI_EXCLAMATION.findall(bare)),
        len(_MULTI_QUESTION.findall(bare)),
        float(bool(_INTERROBANG.search(bare))),
        float(bool(_ELLIPSIS.search(bare))),
    ]

    pos_counts = [sum(1 for tag in tags if tag == wanted) for wanted in _POS_COUNTED]
    values += pos_counts
    values += [_ratio(count, total) for count in pos_counts]

    sentiment_counts = [sum(1 for term in terms if term in lexicons[name]) for name in _SENTIMENT]
    values += sentiment_counts
    values += [_ratio(count, total) for count in sentiment_counts]

    emotion_counts = [sum(1 for term in terms if term in lexicons[f"emotion_{name}"]) for name in _EMOTIONS]
    values += [_ratio(count, total) for count in emotion_counts]
    values += [float(count > 0) for count in emotion_counts]

    extreme = sum(1 for term in terms if term in lexicons['extreme_words'])
    values += [extreme, _ratio(extreme, total)]

    hashtags = len(HASHTAG_PATTERN.findall(bare))
    mentions = len(MENTION_PATTERN.findall(bare))
    values += [
        hashtags, float(hashtags > 0),
        mentions, float(mentions > 0),
        float(bool(_REPOST.search(text))),
        len(_EMOTICON.findall(bare)),
    ]

    unique = len(doc.unique_terms)
    values += [len(text), total, unique, _ratio(unique, total)]

    urls = len(URL_PATTERN.findall(text))
    values += [urls, float(urls > 0), float(bool(_PICTURE.search(text)))]

    return np.array(values, dtype=np.float64)


def assemble(context: Sequence[float], nov: NoveltyScores, pf: float, manifest_hash: str) -> FeatureVector:
    """Concatenate context, novelty and pseudo-feedback values in manifest order"""
    if len(context) != CONTEXT_SIZE:
        raise FeatureError(f"Expected {CONTEXT_SIZE} context features, got {len(context)}")
    values = np.empty(FEATURE_COUNT, dtype=np.float64)
    values[:CONTEXT_SIZE] = context
    values[NOVELTY_START:PF_INDEX] = nov.as_list()
    values[PF_INDEX] = pf

    bad = np.flatnonzero(~np.isfinite(values))
    if len(bad):
        raise FeatureError(f"Feature {int(bad[0])} is not finite ({values[bad[0]]})", index=int(bad[0]))
    return FeatureVector(values, manifest_hash)


@dataclass(frozen=True)
class ExtractedMessage:
    """Everything about a message that does not depend on the stream history"""
    message: Message
    doc: TokenizedDoc
    keywords: KeywordSet
    context: np.ndarray
    novelty: NoveltyScores
    doc_vector: TfIdfVector


class FeatureExtractor:
    """Per-message feature extraction against a loaded trusted memory.

    Stateless apart from the memory it reads, so ``extract`` is safe to call
    from several threads as long as nothing inserts into the memory.
    """

    def __init__(self, memory: TrustedMemory, lexicons: LexiconPack, manifest: FeatureManifest,
                 novelty_mode: str = 'kterm', keyword_vocab: Optional[Vocabulary] = None):
        if manifest.names[:CONTEXT_SIZE] != CONTEXT_FEATURE_NAMES:
            raise DataError("Feature manifest context names do not match the context feature extractor")
        if novelty_mode not in ('kterm', 'vector'):
            raise DataError(f"Unknown novelty mode '{novelty_mode}'")

        self.memory = memory
        self.lexicons = lexicons
        self.manifest = manifest
        self.novelty_mode = novelty_mode
        self.keyword_vocab = keyword_vocab if keyword_vocab is not None else memory.vocab
        self.tokenizer = get_tokenizer(memory.tokenizer)
        self.tagger = LexiconTagger(lexicons)

    @property
    def manifest_hash(self) -> str:
        return self.manifest.manifest_hash

    def tokenize(self, msg: Message) -> TokenizedDoc:
        return self.tokenizer.tokenize(msg.text, msg.id)

    def _vector_novelty_scores(self, doc: TokenizedDoc, doc_vector: TfIdfVector, keywords: KeywordSet):
        vocab = self.memory.vocab
        weights = term_weights(doc, vocab)
        keyword_vector = TfIdfVector.from_weights({vocab.feature_id(term): weights[term] for term in keywords})
        return NoveltyScores(
            all_k1=vector_novelty(self.memory.index, doc_vector),
            key_k1=vector_novelty(self.memory.index, keyword_vector),
        )

    def extract(self, msg: Message, doc: Optional[TokenizedDoc] = None) -> ExtractedMessage:
        doc = doc if doc is not None else self.tokenize(msg)
        tags = self.tagger.tag(doc.terms, msg.pos_tags)
        keywords = top_keywords(doc, self.keyword_vocab)
        doc_vector = tfidf_vector(doc, self.memory.vocab)

        if self.novelty_mode == 'vector':
            novelty = self._vector_novelty_scores(doc, doc_vector, keywords)
        else:
            novelty = novelty_scores(self.memory.kterms, doc, keywords)

        context = context_features(msg, doc, tags, self.lexicons)
        return ExtractedMessage(msg, doc, keywords, context, novelty, doc_vector)

    def vector(self, extracted: ExtractedMessage, pf: float = 0.0) -> FeatureVector:
        return assemble(extracted.context, extracted.novelty, pf, self.manifest_hash)

    def get_extractor_stats(self):
        return {
            'tokenizer': self.tokenizer.name,
            'novelty_mode': self.novelty_mode,
            'keyword_vocabulary_size': self.keyword_vocab.size,
            'lexicons': self.lexicons.get_lexicon_stats(),
        }
