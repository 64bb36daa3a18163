"""
Seeded synthetic news corpus and labelled message stream

News articles are bags of distinct pseudo-words. Non-rumours are fragments
of a single message-sized news window; rumours mix a news fragment with
fresh words that never occur in the news. The duplicate variant turns a
share of rumours into echoes of a recent rumour that carry only its news
terms, so they can only be recognised through pseudo feedback.
"""

import json
import logging
import math
import os
import random
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Set, Tuple

from app.models.records import NON_RUMOUR, RUMOUR, Message, NewsArticle

logger = logging.getLogger(__name__)

_ONSETS = 'bdfgklmnprstvz'
_VOWELS = 'aeiou'
_CODAS = ('', '', 'n', 'r', 's')


@dataclass
class SyntheticSpec:
    seed: int = 7
    articles: int = 200
    messages: int = 400
    vocabulary_size: int = 5000
    min_article_terms: int = 20
    max_article_terms: int = 200
    min_message_terms: int = 10
    max_message_terms: int = 14
    window_length: int = 14
    min_unseen_fraction: float = 0.3
    max_unseen_fraction: float = 0.5
    duplicates: bool = False
    duplicate_share: float = 0.3
    echo_lookback: int = 20
    start_timestamp: int = 1_400_000_000


@dataclass
class SyntheticCorpus:
    news: List[NewsArticle]
    stream: List[Message]

    @property
    def split_index(self) -> int:
        return len(self.stream) // 2

    @property
    def train(self) -> List[Message]:
        return self.stream[:self.split_index]

    @property
    def test(self) -> List[Message]:
        return self.stream[self.split_index:]


class SyntheticCorpusGenerator:
    """Deterministic given its SyntheticSpec: same seed, same files"""

    def __init__(self, spec: Optional[SyntheticSpec] = None):
        self.spec = spec or SyntheticSpec()
        self.rng = random.Random(self.spec.seed)
        self._issued: Set[str] = set()
        self.news_vocabulary = self._fresh_words(self.spec.vocabulary_size)

    def _word(self) -> str:
        syllables = self.rng.randint(2, 3)
        return ''.join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) + self.rng.choice(_CODAS)
                       for _ in range(syllables))

    def _fresh_words(self, count: int) -> List[str]:
        """Words never handed out before, in generation order"""
        words = []
        while len(words) < count:
            word = self._word()
            if word not in self._issued:
                self._issued.add(word)
                words.append(word)
        return words

    def _article_terms(self) -> List[str]:
        size = self.rng.randint(self.spec.min_article_terms, self.spec.max_article_terms)
        return self.rng.sample(self.news_vocabulary, min(size, len(self.news_vocabulary)))

    def generate_news(self) -> List[NewsArticle]:
        articles = []
        for i in range(self.spec.articles):
            terms = self._article_terms()
            articles.append(NewsArticle(id=f"news-{i:04d}", timestamp=self.spec.start_timestamp + 60 * i,
                                        title='', text=' '.join(terms)))
        return articles

    def _news_window(self, news: List[NewsArticle]) -> List[str]:
        terms = self.rng.choice(news).text.split()
        length = self.spec.window_length
        start = self.rng.randint(0, max(0, len(terms) - length))
        return terms[start:start + length]

    def _length(self) -> int:
        return self.rng.randint(self.spec.min_message_terms, self.spec.max_message_terms)

    def _non_rumour(self, news: List[NewsArticle]) -> List[str]:
        window = self._news_window(news)
        return self.rng.sample(window, min(self._length(), len(window)))

    def _rumour(self, news: List[NewsArticle]) -> Tuple[List[str], List[str], List[str]]:
        """Returns (terms, news part, source window)"""
        window = self._news_window(news)
        length = self._length()
        fraction = self.rng.uniform(self.spec.min_unseen_fraction, self.spec.max_unseen_fraction)
        unseen = max(1, math.ceil(length * fraction))
        news_part = self.rng.sample(window, min(length - unseen, len(window)))
        terms = news_part + self._fresh_words(unseen)
        self.rng.shuffle(terms)
        return terms, news_part, window

    def _echo(self, base_news: List[str], base_window: List[str]) -> List[str]:
        extra_pool = [term for term in base_window if term not in base_news]
        wanted = max(0, self._length() - len(base_news))
        terms = list(base_news) + self.rng.sample(extra_pool, min(wanted, len(extra_pool)))
        self.rng.shuffle(terms)
        return terms

    def generate_stream(self, news: List[NewsArticle], count: Optional[int] = None,
                        id_prefix: str = 'msg', start_offset: int = 0) -> List[Message]:
        count = self.spec.messages if count is None else count
        labels = [RUMOUR] * (count // 2) + [NON_RUMOUR] * (count - count // 2)
        self.rng.shuffle(labels)
        half = max(1, count // 2)

        messages = []
        bases: List[Tuple[int, List[str], List[str]]] = []
        echoes = 0
        for i, label in enumerate(labels):
            if label == NON_RUMOUR:
                terms = self._non_rumour(news)
            else:
                candidates = [base for base in bases
                              if i - base[0] <= self.spec.echo_lookback and base[0] // half == i // half]
                if self.spec.duplicates and candidates and self.rng.random() < self.spec.duplicate_share:
                    _, base_news, base_window = self.rng.choice(candidates)
                    terms = self._echo(base_news, base_window)
                    echoes += 1
                else:
                    terms, news_part, window = self._rumour(news)
                    bases.append((i, news_part, window))
            messages.append(Message(id=f"{id_prefix}-{start_offset + i:06d}",
                                    timestamp=self.spec.start_timestamp + 86_400 + 30 * (start_offset + i),
                                    text=' '.join(terms), label=label))

        if self.spec.duplicates:
            logger.info(f"Generated {echoes} echo rumours out of {labels.count(RUMOUR)}")
        return messages

    def generate(self) -> SyntheticCorpus:
        news = self.generate_news()
        stream = self.generate_stream(news)
        logger.info(f"Generated {len(news)} articles and {len(stream)} messages (seed {self.spec.seed})")
        return SyntheticCorpus(news, stream)

    def iter_bench_stream(self, news: List[NewsArticle], count: int, chunk: int = 10_000) -> Iterator[Message]:
        """A long labelled stream produced chunk by chunk"""
        produced = 0
        while produced < count:
            size = min(chunk, count - produced)
            yield from self.generate_stream(news, size, id_prefix='bench', start_offset=produced)
            produced += size


def _write_jsonl(path: str, records) -> None:
    with open(path, 'w', encoding='utf-8') as handle:
        for record in records:
            payload = {key: value for key, value in asdict(record).items() if value is not None}
            handle.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + '\n')


def write_corpus(corpus: SyntheticCorpus, out_dir: str) -> Dict[str, str]:
    """Write news, full stream and its chronological halves as JSON Lines"""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.jsonl") for name in ('news', 'stream', 'train', 'test')}
    _write_jsonl(paths['news'], corpus.news)
    _write_jsonl(paths['stream'], corpus.stream)
    _write_jsonl(paths['train'], corpus.train)
    _write_jsonl(paths['test'], corpus.test)
    logger.info(f"Wrote synthetic corpus to {out_dir}")
    return paths
