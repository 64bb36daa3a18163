"""
Memory file persistence

Layout (little-endian):
    magic (8 bytes) | version u32 | m u64 | h u32 | h seeds u64 | inserted count per k u64
    three raw bit arrays of ceil(m/8) bytes (k = 1, 2, 3)
    length-prefixed sections: meta JSON, vocabulary text, window refs JSON,
    CSR indptr (int64), CSR indices (int64), CSR data (float64)
"""

import io
import json
import logging
import struct
from typing import Any, List, Tuple

import numpy as np

from app.models.bloom_filter import KTERM_LEVELS, BloomFilter, KtermMemory
from app.models.errors import DataError, MemoryFormatError
from app.models.vector_store import SubDocIndex
from app.models.vocabulary import TfIdfVector, Vocabulary
from app.services.novelty_service import TrustedMemory

logger = logging.getLogger(__name__)

MEMORY_MAGIC = b'RUMRMEM\x00'
MEMORY_VERSION = 1


def _json_bytes(value: Any) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(',', ':'), ensure_ascii=False).encode('utf-8')


class _Reader:
    """Bounds-checked cursor over a memory file payload"""

    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, size: int) -> bytes:
        if size < 0 or self.pos + size > len(self.raw):
            raise MemoryFormatError(f"Memory file truncated at byte {self.pos} (needed {size} more)")
        chunk = self.raw[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def section(self) -> bytes:
        (size,) = self.unpack('<Q')
        return self.take(size)


class MemoryStorage:
    """Saves and loads the trusted memory as one deterministic binary file"""

    def serialize(self, memory: TrustedMemory) -> bytes:
        kterms = memory.kterms
        index = memory.index
        out = io.BytesIO()

        out.write(MEMORY_MAGIC)
        out.write(struct.pack('<IQI', MEMORY_VERSION, kterms.num_bits, kterms.num_hashes))
        out.write(struct.pack(f'<{kterms.num_hashes}Q', *kterms.seeds))
        out.write(struct.pack('<3Q', *(kterms.filters[k].inserted_count for k in KTERM_LEVELS)))
        for k in KTERM_LEVELS:
            out.write(kterms.filters[k].to_bytes())

        meta = {
            'tokenizer': memory.tokenizer,
            'kterm_scope': memory.kterm_scope,
            'kterm_stride': memory.kterm_stride,
            'window_length': index.window_length,
            'stride': index.stride,
            'keep_top_terms': index.keep_top_terms,
        }
        matrix = index.raw_matrix()
        sections = [
            _json_bytes(meta),
            memory.vocab.to_text().encode('utf-8'),
            _json_bytes([[article_id, offset] for article_id, offset in index.refs]),
            matrix.indptr.astype('<i8').tobytes(),
            matrix.indices.astype('<i8').tobytes(),
            matrix.data.astype('<f8').tobytes(),
        ]
        for payload in sections:
            out.write(struct.pack('<Q', len(payload)))
            out.write(payload)
        return out.getvalue()

    def deserialize(self, raw: bytes) -> TrustedMemory:
        reader = _Reader(raw)
        if reader.take(len(MEMORY_MAGIC)) != MEMORY_MAGIC:
            raise MemoryFormatError("Not a rumour memory file (bad magic)")
        version, num_bits, num_hashes = reader.unpack('<IQI')
        if version != MEMORY_VERSION:
            raise MemoryFormatError(f"Unsupported memory file version {version}, expected {MEMORY_VERSION}")
        seeds = reader.unpack(f'<{num_hashes}Q')
        inserted = reader.unpack('<3Q')

        try:
            kterms = KtermMemory(num_bits, num_hashes, seeds)
            payload_size = (num_bits + 7) // 8
            for k, count in zip(KTERM_LEVELS, inserted):
                kterms.filters[k] = BloomFilter.from_bytes(num_bits, num_hashes, seeds, count,
                                                           reader.take(payload_size))

            meta = json.loads(reader.section().decode('utf-8'))
            vocab = Vocabulary.from_text(reader.section().decode('utf-8'))
            refs = [(str(article_id), int(offset)) for article_id, offset in json.loads(reader.section())]
            indptr = np.frombuffer(reader.section(), dtype='<i8')
            indices = np.frombuffer(reader.section(), dtype='<i8')
            data = np.frombuffer(reader.section(), dtype='<f8')
        except MemoryFormatError:
            raise
        except (DataError, ValueError, KeyError, TypeError) as e:
            raise MemoryFormatError(f"Corrupt memory file: {e}") from e

        if reader.pos != len(raw):
            raise MemoryFormatError(f"Memory file has {len(raw) - reader.pos} trailing bytes")
        if len(indptr) != len(refs) + 1 or len(indices) != len(data) or (len(indptr) and indptr[-1] != len(data)):
            raise MemoryFormatError("Sub-document index sections are inconsistent")

        vectors: List[TfIdfVector] = []
        for row in range(len(refs)):
            start, end = int(indptr[row]), int(indptr[row + 1])
            vectors.append(TfIdfVector.from_weights(
                {int(term_id): float(weight) for term_id, weight in zip(indices[start:end], data[start:end])}
            ))

        try:
            index = SubDocIndex(vocab.size, meta['window_length'], meta['stride'], meta['keep_top_terms'],
                                refs, vectors)
            return TrustedMemory(vocab=vocab, kterms=kterms, index=index, tokenizer=meta['tokenizer'],
                                 kterm_scope=meta['kterm_scope'], kterm_stride=meta['kterm_stride'])
        except (DataError, KeyError) as e:
            raise MemoryFormatError(f"Corrupt memory file: {e}") from e

    def save(self, memory: TrustedMemory, path: str) -> int:
        payload = self.serialize(memory)
        with open(path, 'wb') as handle:
            handle.write(payload)
        logger.info(f"Wrote memory file {path} ({len(payload)} bytes)")
        return len(payload)

    def load(self, path: str) -> TrustedMemory:
        with open(path, 'rb') as handle:
            raw = handle.read()
        memory = self.deserialize(raw)
        logger.info(f"Loaded memory file {path}: {memory.vocab.size} terms, {len(memory.index)} windows")
        return memory

