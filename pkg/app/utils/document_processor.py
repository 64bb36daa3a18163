"""
Document ingest and tokenization

Reads the trusted news corpus and the chronological message stream from
JSON Lines files, and turns text into term sequences through pluggable
tokenization strategies.
"""

import json
import logging
import os
import re
from abc import ABC, abstractmethod
from typing import Any, Dict, Iterator, List, Optional, Tuple

from app.models.errors import DataError, RumourError, StreamOrderError
from app.models.records import LABELS, Message, NewsArticle, TokenizedDoc

logger = logging.getLogger(__name__)

URL_RE = re.compile(r'^(?:https?://|www\.)\S+$', re.IGNORECASE)
_LEADING = re.compile(r'^[^\w#@]+')
_EDGE_PUNCT = re.compile(r'^[\W_]+|[\W_]+$')
_URL_TRAILING = re.compile(r'[.,;:!?\)\]\}\'"]+$')


def term_kind(term: str) -> str:
    """Classify a term as url, hashtag, mention or word"""
    if URL_RE.match(term):
        return 'url'
    if len(term) > 1 and term.startswith('#'):
        return 'hashtag'
    if len(term) > 1 and term.startswith('@'):
        return 'mention'
    return 'word'


class TokenizationStrategy(ABC):
    """Abstract base class for tokenization schemes"""

    name = 'abstract'

    @abstractmethod
    def split(self, text: str) -> List[str]:
        """Split text into normalized terms"""
        pass

    def tokenize(self, text: str, doc_id: str = '') -> TokenizedDoc:
        return TokenizedDoc(doc_id=doc_id, terms=tuple(self.split(text or '')))


class WhitespaceTokenizer(TokenizationStrategy):
    """Unicode whitespace split, surrounding punctuation stripped, lowercased.

    URLs, hashtags (``#topic`` and ``#topic#``) and mentions survive as
    single terms.
    """

    name = 'whitespace'

    def split(self, text: str) -> List[str]:
        terms = []
        for raw in text.split():
            term = self._normalize(raw)
            if term:
                terms.append(term)
        return terms

    @staticmethod
    def _normalize(raw: str) -> str:
        token = _LEADING.sub('', raw)
        if not token:
            return ''
        if URL_RE.match(token):
            return _URL_TRAILING.sub('', token).lower()
        if token[0] in '#@':
            sigil = token[0]
            inner = _EDGE_PUNCT.sub('', token.strip('#@'))
            if not inner:
                return ''
            if sigil == '#' and _URL_TRAILING.sub('', token).endswith('#') and len(token) > 2:
                return f"#{inner}#".lower()
            return f"{sigil}{inner}".lower()
        return _EDGE_PUNCT.sub('', token).lower()


class PreSegmentedTokenizer(TokenizationStrategy):
    """Input already carries token-separating spaces; only lowercased"""

    name = 'pre_segmented'

    def split(self, text: str) -> List[str]:
        return [term.lower() for term in text.split()]


class CharBigramTokenizer(TokenizationStrategy):
    """Overlapping character bigrams over non-whitespace runs (unsegmented CJK fallback)"""

    name = 'char_bigram'

    def split(self, text: str) -> List[str]:
        terms = []
        for run in text.lower().split():
            if term_kind(run) != 'word' or len(run) == 1:
                terms.append(run)
                continue
            terms.extend(run[i:i + 2] for i in range(len(run) - 1))
        return terms


_TOKENIZERS = {
    cls.name: cls() for cls in (WhitespaceTokenizer, PreSegmentedTokenizer, CharBigramTokenizer)
}


def get_tokenizer(scheme: str) -> TokenizationStrategy:
    try:
        return _TOKENIZERS[scheme]
    except KeyError:
        raise ValueError(f"Unknown tokenizer scheme '{scheme}', expected one of {sorted(_TOKENIZERS)}")


def tokenize(text: str, scheme: str, doc_id: str = '') -> TokenizedDoc:
    return get_tokenizer(scheme).tokenize(text, doc_id)


def _iter_records(path: str) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, record) for every non-blank line"""
    with open(path, 'rb') as handle:
        for line_no, raw in enumerate(handle, start=1):
            try:
                line = raw.decode('utf-8')
            except UnicodeDecodeError as e:
                raise DataError(f"{path}: line {line_no}: not valid UTF-8 (byte {e.start})") from e
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: line {line_no}: malformed record ({e.msg})") from e
            if not isinstance(record, dict):
                raise DataError(f"{path}: line {line_no}: record must be an object")
            yield line_no, record


def _require(record: Dict[str, Any], key: str, kind, path: str, line_no: int):
    value = record.get(key)
    if value is None:
        raise DataError(f"{path}: line {line_no}: missing field '{key}'")
    if not isinstance(value, kind) or isinstance(value, bool):
        raise DataError(f"{path}: line {line_no}: field '{key}' has the wrong type")
    return value


def _parse_article(record: Dict[str, Any], path: str, line_no: int) -> NewsArticle:
    article_id = _require(record, 'id', str, path, line_no)
    timestamp = _require(record, 'timestamp', int, path, line_no)
    text = _require(record, 'text', str, path, line_no)
    title = record.get('title', '')
    if not article_id:
        raise DataError(f"{path}: line {line_no}: empty id")
    if not text.strip():
        raise DataError(f"{path}: line {line_no}: empty text")
    if not isinstance(title, str):
        raise DataError(f"{path}: line {line_no}: field 'title' has the wrong type")
    return NewsArticle(id=article_id, timestamp=timestamp, title=title, text=text)


def _parse_message(record: Dict[str, Any], path: str, line_no: int) -> Message:
    message_id = _require(record, 'id', str, path, line_no)
    timestamp = _require(record, 'timestamp', int, path, line_no)
    text = _require(record, 'text', str, path, line_no)
    if not message_id:
        raise DataError(f"{path}: line {line_no}: empty id")
    label = record.get('label')
    if label is not None and label not in LABELS:
        raise DataError(f"{path}: line {line_no}: label must be one of {LABELS}, got {label!r}")
    pos_tags = record.get('pos_tags')
    if pos_tags is not None:
        if not isinstance(pos_tags, list) or not all(isinstance(tag, str) for tag in pos_tags):
            raise DataError(f"{path}: line {line_no}: pos_tags must be a list of strings")
        pos_tags = tuple(pos_tags)
    return Message(id=message_id, timestamp=timestamp, text=text, label=label, pos_tags=pos_tags)


def load_news_corpus(path: str) -> List[NewsArticle]:
    """Load trusted news articles in file order"""
    articles = []
    seen = {}
    for line_no, record in _iter_records(path):
        article = _parse_article(record, path, line_no)
        if article.id in seen:
            raise DataError(
                f"{path}: line {line_no}: duplicate article id '{article.id}' (first seen on line {seen[article.id]})"
            )
        seen[article.id] = line_no
        articles.append(article)
    logger.info(f"Loaded {len(articles)} news articles from {path}")
    return articles


class MessageStream:
    """Single-pass iterator over a chronological message file.

    With ``strict_order`` any timestamp decrease aborts iteration; otherwise
    the decrease is counted in ``summary['order_warnings']``.
    """

    def __init__(self, path: str, strict_order: bool = True):
        self.path = path
        self.strict_order = strict_order
        self.messages_read = 0
        self.order_warnings = 0
        self._consumed = False

    def __iter__(self) -> Iterator[Message]:
        if self._consumed:
            raise RumourError(f"Stream {self.path} has already been consumed")
        self._consumed = True
        return self._generate()

    def _generate(self) -> Iterator[Message]:
        previous: Optional[Message] = None
        for line_no, record in _iter_records(self.path):
            message = _parse_message(record, self.path, line_no)
            if previous is not None and message.timestamp < previous.timestamp:
                if self.strict_order:
                    raise StreamOrderError(previous.id, message.id, previous.timestamp, message.timestamp)
                self.order_warnings += 1
                logger.warning(
                    f"Out-of-order message '{message.id}' after '{previous.id}' "
                    f"({message.timestamp} < {previous.timestamp})"
                )
            self.messages_read += 1
            previous = message
            yield message

    @property
    def summary(self) -> Dict[str, int]:
        return {'messages_read': self.messages_read, 'order_warnings': self.order_warnings}


def open_stream(path: str, strict_order: bool = True) -> MessageStream:
    if not os.path.exists(path):
        raise DataError(f"Stream file does not exist: {path}")
    return MessageStream(path, strict_order=strict_order)


class DocumentProcessor:
    """Ingest front end bound to one tokenization strategy"""

    SUPPORTED_EXTENSIONS = {'.jsonl', '.json', '.txt'}

    def __init__(self, scheme: str = 'whitespace'):
        self.tokenizer = get_tokenizer(scheme)
        self.documents_tokenized = 0

        logger.info(f"DocumentProcessor initialized with {self.tokenizer.__class__.__name__}")

    def validate_file(self, file_path: str) -> bool:
        """Validate file before processing"""
        if not os.path.exists(file_path):
            logger.error(f"File does not exist: {file_path}")
            return False

        _, ext = os.path.splitext(file_path.lower())
        if ext not in self.SUPPORTED_EXTENSIONS:
            logger.warning(f"Unexpected file extension {ext} for {file_path}; reading as JSON Lines")
        return True

    def load_news_corpus(self, path: str) -> List[NewsArticle]:
        if not self.validate_file(path):
            raise DataError(f"News corpus does not exist: {path}")
        return load_news_corpus(path)

    def open_stream(self, path: str, strict_order: bool = True) -> MessageStream:
        if not self.validate_file(path):
            raise DataError(f"Stream file does not exist: {path}")
        return open_stream(path, strict_order=strict_order)

    def tokenize_article(self, article: NewsArticle) -> TokenizedDoc:
        text = f"{article.title}\n{article.text}" if article.title else article.text
        self.documents_tokenized += 1
        return self.tokenizer.tokenize(text, article.id)

    def tokenize_message(self, message: Message) -> TokenizedDoc:
        self.documents_tokenized += 1
        return self.tokenizer.tokenize(message.text, message.id)

    def get_processing_stats(self) -> Dict[str, Any]:
        """Get processing statistics"""
        return {
            'documents_tokenized': self.documents_tokenized,
            'tokenizer': self.tokenizer.name,
            'supported_extensions': sorted(self.SUPPORTED_EXTENSIONS)
        }
