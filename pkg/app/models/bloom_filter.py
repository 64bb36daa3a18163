import math
from dataclasses import astuple, dataclass
from functools import partial
from itertools import chain
from typing import Dict, Iterable, List, Sequence, Tuple

import mmh3
import numpy as np
from bitarray import bitarray

from app.models.errors import DataError

KTERM_SEPARATOR = '␟'
KTERM_LEVELS = (1, 2, 3)
HASH_SEED = 0x2A

_hash_pair = partial(mmh3.hash64, seed=HASH_SEED, signed=False)


class BloomFilter:
    """Fixed-size bit array with h double-hashed bit positions per key.

    Hash i of a key lands on ``(h1 + i*h2 + seed_i) mod m`` where (h1, h2)
    are the two halves of its 128-bit MurmurHash3. Lookups and insertions
    are vectorized over batches of keys.
    """

    def __init__(self, num_bits: int, num_hashes: int, seeds: Sequence[int]):
        if num_bits < 8:
            raise DataError("Bloom filter needs at least 8 bits")
        if num_hashes < 1:
            raise DataError("Bloom filter needs at least one hash function")
        if len(seeds) != num_hashes:
            raise DataError(f"Expected {num_hashes} seeds, got {len(seeds)}")

        self.num_bits = int(num_bits)
        self.num_hashes = int(num_hashes)
        self.seeds = tuple(int(seed) for seed in seeds)
        self.inserted_count = 0
        self._seed_array = np.array(self.seeds, dtype=np.uint64)
        self._hash_index = np.arange(self.num_hashes, dtype=np.uint64)
        self._modulus = np.uint64(self.num_bits)
        self._attach(bitarray(self.num_bits, endian='big'))
        self.bits.setall(0)

    def _attach(self, bits: bitarray):
        self.bits = bits
        # writable byte view over the bitarray buffer; big-endian bit order within each byte
        self._view = np.ndarray(shape=((self.num_bits + 7) // 8,), dtype=np.uint8, buffer=bits)

    def positions(self, keys: Sequence[str]) -> np.ndarray:
        """Bit positions, one row of h per key"""
        halves = np.fromiter(chain.from_iterable(map(_hash_pair, keys)), dtype=np.uint64,
                             count=2 * len(keys)).reshape(-1, 2)
        h1 = halves[:, 0:1]
        h2 = halves[:, 1:2]
        return (h1 + self._hash_index * h2 + self._seed_array) % self._modulus

    def add_many(self, keys: Sequence[str]) -> None:
        if not keys:
            return
        positions = self.positions(keys).ravel()
        masks = np.right_shift(np.uint8(0x80), (positions & np.uint64(7)).astype(np.uint8))
        np.bitwise_or.at(self._view, (positions >> np.uint64(3)).astype(np.intp), masks)
        self.inserted_count += len(keys)

    def contains_many(self, keys: Sequence[str]) -> np.ndarray:
        if not keys:
            return np.zeros(0, dtype=bool)
        return self.check_positions(self.positions(keys))

    def check_positions(self, positions: np.ndarray) -> np.ndarray:
        """Membership for precomputed position rows"""
        if len(positions) == 0:
            return np.zeros(0, dtype=bool)
        shifts = (np.uint64(7) - (positions & np.uint64(7))).astype(np.uint8)
        bits_set = (self._view[(positions >> np.uint64(3)).astype(np.intp)] >> shifts) & np.uint8(1)
        return bits_set.all(axis=1)

    def add(self, key: str) -> None:
        self.add_many([key])

    def __contains__(self, key: str) -> bool:
        return bool(self.contains_many([key])[0])

    def false_positive_rate(self, inserted: int = None) -> float:
        """Analytic bound (1 - e^(-h n / m))^h"""
        n = self.inserted_count if inserted is None else inserted
        return (1.0 - math.exp(-self.num_hashes * n / self.num_bits)) ** self.num_hashes

    def to_bytes(self) -> bytes:
        return self.bits.tobytes()

    @classmethod
    def from_bytes(cls, num_bits: int, num_hashes: int, seeds: Sequence[int],
                   inserted_count: int, raw: bytes) -> 'BloomFilter':
        if len(raw) != (num_bits + 7) // 8:
            raise DataError(f"Bloom filter payload has {len(raw)} bytes, expected {(num_bits + 7) // 8}")
        bloom = cls(num_bits, num_hashes, seeds)
        bits = bitarray(endian='big')
        bits.frombytes(raw)
        del bits[num_bits:]
        bloom._attach(bits)
        bloom.inserted_count = inserted_count
        return bloom


class KtermMemory:
    """One independent Bloom filter per kterm length"""

    def __init__(self, num_bits: int, num_hashes: int, seeds: Sequence[int]):
        self.filters: Dict[int, BloomFilter] = {
            k: BloomFilter(num_bits, num_hashes, seeds) for k in KTERM_LEVELS
        }

    @property
    def num_bits(self) -> int:
        return self.filters[1].num_bits

    @property
    def num_hashes(self) -> int:
        return self.filters[1].num_hashes

    @property
    def seeds(self) -> Tuple[int, ...]:
        return self.filters[1].seeds

    def contains_levels(self, keys_by_level: Dict[int, List[str]]) -> Dict[int, np.ndarray]:
        """Membership of each level's keys, hashed together in one batch"""
        # every filter shares m, h and the seeds, so position rows are interchangeable
        levels = [k for k in KTERM_LEVELS if k in keys_by_level]
        positions = self.filters[1].positions(list(chain.from_iterable(keys_by_level[k] for k in levels)))
        found, start = {}, 0
        for k in levels:
            stop = start + len(keys_by_level[k])
            found[k] = self.filters[k].check_positions(positions[start:stop])
            start = stop
        return found

    def footprint_bits(self) -> int:
        return sum(len(bloom.bits) for bloom in self.filters.values())

    def inserted_counts(self) -> Dict[int, int]:
        return {k: bloom.inserted_count for k, bloom in self.filters.items()}

    def get_memory_stats(self) -> Dict[str, object]:
        return {
            'num_bits': self.num_bits,
            'num_hashes': self.num_hashes,
            'footprint_bits': self.footprint_bits(),
            'inserted': self.inserted_counts(),
            'false_positive_rate': {k: bloom.false_positive_rate() for k, bloom in self.filters.items()},
        }


@dataclass(frozen=True)
class NoveltyScores:
    """Fraction of unseen kterms for k = 1..3, over all terms and over keywords"""
    all_k1: float = 0.0
    all_k2: float = 0.0
    all_k3: float = 0.0
    key_k1: float = 0.0
    key_k2: float = 0.0
    key_k3: float = 0.0

    def as_list(self) -> List[float]:
        return list(astuple(self))

    @classmethod
    def from_values(cls, values: Iterable[float]) -> 'NoveltyScores':
        return cls(*values)
