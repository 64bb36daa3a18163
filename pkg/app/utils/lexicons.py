"""Term lexicons for sentiment, emotion and part-of-speech features."""

import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Sequence, Tuple

from app.models.errors import FeatureError

logger = logging.getLogger(__name__)

LEXICON_NAMES = (
    'strong_pos', 'weak_pos', 'strong_neg', 'weak_neg',
    'emotion_positive', 'emotion_negative', 'emotion_sad', 'emotion_anxious', 'emotion_surprised',
    'extreme_words', 'quantity_words', 'time_words',
)
TAGGER_LEXICONS = ('verbs', 'nouns', 'adjectives')
POS_TAGS = ('verb', 'noun', 'adjective', 'quantity', 'time', 'other')

_NUMBER = re.compile(r'^[+-]?\d[\d,.]*%?$')


def read_term_file(path: str) -> FrozenSet[str]:
    """One term per line; blank lines and ``#`` comments ignored; lowercased"""
    terms = set()
    with open(path, 'r', encoding='utf-8') as handle:
        for line in handle:
            term = line.strip()
            if term and not term.startswith('#'):
                terms.add(term.lower())
    return frozenset(terms)


@dataclass(frozen=True)
class LexiconPack:
    """Named term sets, one plain-text file per set"""
    sets: Dict[str, FrozenSet[str]] = field(default_factory=dict)

    def __getitem__(self, name: str) -> FrozenSet[str]:
        return self.sets.get(name, frozenset())

    @classmethod
    def load(cls, directory: str) -> 'LexiconPack':
        sets = {}
        for name in LEXICON_NAMES + TAGGER_LEXICONS:
            path = os.path.join(directory, f"{name}.txt")
            if os.path.isfile(path):
                sets[name] = read_term_file(path)
            else:
                logger.warning(f"Lexicon file missing, using an empty set: {path}")
                sets[name] = frozenset()
        logger.info(f"Loaded {len(sets)} lexicons from {directory}")
        return cls(sets)

    def get_lexicon_stats(self) -> Dict[str, int]:
        return {name: len(terms) for name, terms in sorted(self.sets.items())}


class LexiconTagger:
    """Dictionary part-of-speech tagger.

    Quantity and time lexicons (and numerals) win over the verb, noun and
    adjective dictionaries; everything else is ``other``.
    """

    def __init__(self, lexicons: LexiconPack):
        self._lookup = (
            ('quantity', lexicons['quantity_words']),
            ('time', lexicons['time_words']),
            ('verb', lexicons['verbs']),
            ('noun', lexicons['nouns']),
            ('adjective', lexicons['adjectives']),
        )

    def tag_term(self, term: str) -> str:
        if _NUMBER.match(term):
            return 'quantity'
        for tag, terms in self._lookup:
            if term in terms:
                return tag
        return 'other'

    def tag(self, terms: Sequence[str], supplied: Optional[Sequence[str]] = None) -> Tuple[str, ...]:
        """Supplied tags always take precedence and must align with the terms"""
        if supplied is not None:
            if len(supplied) != len(terms):
                raise FeatureError(f"Supplied POS tags ({len(supplied)}) do not align with {len(terms)} terms")
            tags = tuple(str(tag).lower() for tag in supplied)
            unknown = sorted(set(tags) - set(POS_TAGS))
            if unknown:
                raise FeatureError(f"Unknown POS tags: {', '.join(unknown)}")
            return tags
        return tuple(self.tag_term(term) for term in terms)
