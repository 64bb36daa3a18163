import io
import logging
import math
import os
import sys
from dataclasses import dataclass, fields
from typing import Dict, Iterable, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from app.models.errors import ConfigError

# Load environment variables
load_dotenv()

_ROOT = os.path.dirname(os.path.abspath(__file__))
_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15


def default_bloom_seeds(num_hashes: int) -> Tuple[int, ...]:
    """Fixed per-hash seeds; identical on every run and platform"""
    return tuple((_GOLDEN64 * (i + 1)) & _MASK64 for i in range(num_hashes))


class Config:
    """Process-level settings with environment variable support and validation"""

    # Logging Configuration
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_FILE = os.getenv('LOG_FILE')

    # Data Configuration
    DATA_DIR = os.getenv('DATA_DIR', os.path.join(_ROOT, 'data'))
    FEATURE_MANIFEST_PATH = os.getenv('FEATURE_MANIFEST_PATH', os.path.join(DATA_DIR, 'feature_manifest.csv'))
    LEXICON_DIR = os.getenv('LEXICON_DIR', os.path.join(DATA_DIR, 'lexicons'))
    RUMOUR_CONFIG = os.getenv('RUMOUR_CONFIG')

    # Novelty memory
    BLOOM_BITS = int(os.getenv('BLOOM_BITS', 2 ** 24))
    BLOOM_HASHES = int(os.getenv('BLOOM_HASHES', 7))
    WINDOW_LENGTH = int(os.getenv('WINDOW_LENGTH', 14))

    # Pseudo feedback and classifier
    PF_CAPACITY = int(os.getenv('PF_CAPACITY', 100))
    SVM_C = float(os.getenv('SVM_C', 1.0))
    SVM_SEED = int(os.getenv('SVM_SEED', 0))
    SVM_MAX_ITER = int(os.getenv('SVM_MAX_ITER', 20000))

    @classmethod
    def validate_config(cls):
        """Validate critical configuration values"""
        errors = []

        if cls.BLOOM_BITS < 8:
            errors.append("BLOOM_BITS must be at least 8")

        if cls.BLOOM_HASHES < 1:
            errors.append("BLOOM_HASHES must be positive")

        if cls.WINDOW_LENGTH < 1:
            errors.append("WINDOW_LENGTH must be positive")

        if not isinstance(logging.getLevelName(cls.LOG_LEVEL.upper()), int):
            errors.append(f"LOG_LEVEL '{cls.LOG_LEVEL}' is not a logging level")

        if errors:
            raise ConfigError(f"Configuration errors: {', '.join(errors)}")

    @classmethod
    def setup_logging(cls):
        """Setup application logging; stdout stays free for reports"""
        handlers = [logging.StreamHandler(sys.stderr)]
        if cls.LOG_FILE:
            handlers.append(logging.FileHandler(cls.LOG_FILE))

        logging.basicConfig(
            level=getattr(logging, cls.LOG_LEVEL.upper(), logging.INFO),
            format=cls.LOG_FORMAT,
            handlers=handlers
        )


_TOKENIZERS = ('whitespace', 'pre_segmented', 'char_bigram')
_KTERM_SCOPES = ('window', 'article')
_ON_ERROR = ('skip', 'abort')
_IDF_SOURCES = ('news', 'stream')
_NOVELTY_MODES = ('kterm', 'vector')


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_optional_int(value: str, none_word: str) -> Optional[int]:
    if value.strip().lower() == none_word:
        return None
    return int(value)


def _parse_seeds(value: str) -> Tuple[int, ...]:
    return tuple(int(part, 0) for part in value.split(',') if part.strip())


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs to reproduce a run.

    Serialized as dotenv ``RUMOUR_*`` lines so the effective configuration
    echoed at startup can be fed straight back in with ``--config``.
    """

    tokenizer: str = 'whitespace'
    bloom_bits: int = Config.BLOOM_BITS
    bloom_hashes: int = Config.BLOOM_HASHES
    bloom_seeds: Tuple[int, ...] = ()
    window_length: Optional[int] = Config.WINDOW_LENGTH  # None means auto
    stride: int = 1
    keep_top_terms: Optional[int] = None
    kterm_scope: str = 'window'
    kterm_stride: int = 1
    pf_capacity: int = Config.PF_CAPACITY
    pf_threshold: str = 'theta1'
    svm_c: float = Config.SVM_C
    svm_seed: int = Config.SVM_SEED
    svm_max_iter: int = Config.SVM_MAX_ITER
    lexicon_dir: str = Config.LEXICON_DIR
    manifest_path: str = Config.FEATURE_MANIFEST_PATH
    on_error: str = 'skip'
    accumulate_stream: bool = False
    joint_round2: bool = False
    keyword_idf_source: str = 'news'
    novelty_mode: str = 'kterm'
    workers: int = 1
    debug: bool = False

    def __post_init__(self):
        if not self.bloom_seeds:
            object.__setattr__(self, 'bloom_seeds', default_bloom_seeds(self.bloom_hashes))

    # -- text form -------------------------------------------------------

    @staticmethod
    def env_key(name: str) -> str:
        return f"RUMOUR_{name.upper()}"

    @classmethod
    def _field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def _parse_field(cls, name: str, raw: str):
        if name in ('bloom_bits', 'bloom_hashes', 'stride', 'kterm_stride', 'pf_capacity',
                    'svm_seed', 'svm_max_iter', 'workers'):
            return int(raw)
        if name == 'svm_c':
            return float(raw)
        if name == 'bloom_seeds':
            return _parse_seeds(raw)
        if name == 'window_length':
            return _parse_optional_int(raw, 'auto')
        if name == 'keep_top_terms':
            return _parse_optional_int(raw, 'none')
        if name in ('accumulate_stream', 'joint_round2', 'debug'):
            return _parse_bool(raw)
        return raw.strip()

    @staticmethod
    def _format_field(name: str, value) -> str:
        if name == 'bloom_seeds':
            return ','.join(str(seed) for seed in value)
        if name == 'window_length' and value is None:
            return 'auto'
        if name == 'keep_top_terms' and value is None:
            return 'none'
        if isinstance(value, bool):
            return 'true' if value else 'false'
        if isinstance(value, float):
            return repr(value)
        return str(value)

    @classmethod
    def from_mapping(cls, raw: Dict[str, str]) -> 'RunConfig':
        """Build from ``RUMOUR_*`` (or bare field name) keys; unknown keys are rejected"""
        names = cls._field_names()
        kwargs = {}
        unknown = []
        for key, value in raw.items():
            name = key.lower()
            if name.startswith('rumour_'):
                name = name[len('rumour_'):]
            if name not in names:
                unknown.append(key)
                continue
            if value is None:
                continue
            try:
                kwargs[name] = cls._parse_field(name, value)
            except ValueError as e:
                raise ConfigError(f"Invalid value for {cls.env_key(name)}: {e}") from e
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> 'RunConfig':
        return cls.from_mapping(dict(dotenv_values(stream=io.StringIO(text))))

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Iterable[str] = ()) -> 'RunConfig':
        """Defaults < config file < ``KEY=VALUE`` overrides"""
        raw: Dict[str, str] = {}
        path = path or Config.RUMOUR_CONFIG
        if path:
            if not os.path.exists(path):
                raise ConfigError(f"Config file not found: {path}")
            try:
                raw.update(dotenv_values(path))
            except UnicodeDecodeError as e:
                raise ConfigError(f"Config file {path} is not valid UTF-8 (byte {e.start})") from e
        for item in overrides:
            if '=' not in item:
                raise ConfigError(f"Override must look like KEY=VALUE, got '{item}'")
            key, value = item.split('=', 1)
            raw[key.strip()] = value.strip()
        return cls.from_mapping(raw)

    def to_text(self) -> str:
        lines = [f"{self.env_key(name)}={self._format_field(name, getattr(self, name))}"
                 for name in self._field_names()]
        return '\n'.join(lines) + '\n'

    # -- derived values --------------------------------------------------

    def resolve_pf_threshold(self, theta1: float) -> float:
        if self.pf_threshold == 'theta1':
            return theta1
        return float(self.pf_threshold.split(':', 1)[1])

    def validate(self, check_paths: bool = True) -> 'RunConfig':
        """Validate numeric ranges, enums and referenced paths"""
        errors = []

        if self.tokenizer not in _TOKENIZERS:
            errors.append(f"tokenizer must be one of {_TOKENIZERS}")
        if self.bloom_bits < 8:
            errors.append("bloom_bits must be at least 8")
        if self.bloom_hashes < 1:
            errors.append("bloom_hashes must be positive")
        if len(self.bloom_seeds) != self.bloom_hashes:
            errors.append(f"bloom_seeds needs exactly {self.bloom_hashes} values")
        if any(seed < 0 or seed > _MASK64 for seed in self.bloom_seeds):
            errors.append("bloom_seeds must be unsigned 64-bit integers")
        if self.window_length is not None and self.window_length < 1:
            errors.append("window_length must be positive or 'auto'")
        if self.stride < 1:
            errors.append("stride must be positive")
        if self.keep_top_terms is not None and self.keep_top_terms < 1:
            errors.append("keep_top_terms must be positive or 'none'")
        if self.kterm_scope not in _KTERM_SCOPES:
            errors.append(f"kterm_scope must be one of {_KTERM_SCOPES}")
        if self.kterm_stride < 1:
            errors.append("kterm_stride must be positive")
        if self.pf_capacity < 0:
            errors.append("pf_capacity must not be negative")
        if self.pf_threshold != 'theta1':
            try:
                if not self.pf_threshold.startswith('fixed:'):
                    raise ValueError
                value = float(self.pf_threshold.split(':', 1)[1])
                if math.isnan(value):
                    raise ValueError
            except ValueError:
                errors.append("pf_threshold must be 'theta1' or 'fixed:<number>'")
        if not self.svm_c > 0:
            errors.append("svm_c must be positive")
        if self.svm_max_iter < 1:
            errors.append("svm_max_iter must be positive")
        if self.on_error not in _ON_ERROR:
            errors.append(f"on_error must be one of {_ON_ERROR}")
        if self.keyword_idf_source not in _IDF_SOURCES:
            errors.append(f"keyword_idf_source must be one of {_IDF_SOURCES}")
        if self.novelty_mode not in _NOVELTY_MODES:
            errors.append(f"novelty_mode must be one of {_NOVELTY_MODES}")
        if self.workers < 1:
            errors.append("workers must be positive")
        if self.workers > 1 and self.pf_capacity > 0:
            errors.append("workers > 1 requires pf_capacity 0")

        if check_paths:
            if not os.path.isdir(self.lexicon_dir):
                errors.append(f"lexicon_dir does not exist: {self.lexicon_dir}")
            if not os.path.isfile(self.manifest_path):
                errors.append(f"manifest_path does not exist: {self.manifest_path}")

        if errors:
            raise ConfigError(f"Configuration errors: {', '.join(errors)}")
        return self
