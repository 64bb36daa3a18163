"""
Linear rumour model and its file format

Layout (little-endian):
    magic (8 bytes) | version u32 | manifest hash (length-prefixed ascii)
    theta f8 | theta1 f8 | bias f8 | pf threshold f8 | pf capacity u64
    scaler means, scaler scales, weights (58 x f8 each)
    settings JSON (length-prefixed) | keyword vocabulary text (length-prefixed, empty when absent)
"""

import csv
import io
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from app.models.errors import DataError, ManifestMismatchError, ModelFormatError
from app.models.feature_manifest import FEATURE_COUNT, FeatureManifest
from app.models.records import NON_RUMOUR, RUMOUR
from app.models.vocabulary import Vocabulary
from app.services.pseudo_feedback import PfConfig

logger = logging.getLogger(__name__)

MODEL_MAGIC = b'RUMRMDL\x00'
MODEL_VERSION = 1


@dataclass
class Model:
    """Standardized linear scorer with its detection threshold"""
    weights: np.ndarray
    bias: float
    scaler_mean: np.ndarray
    scaler_scale: np.ndarray
    theta: float
    theta1: float
    pf: PfConfig
    manifest_hash: str
    settings: Dict[str, Any] = field(default_factory=dict)
    keyword_vocab: Optional[Vocabulary] = None

    def __post_init__(self):
        for name in ('weights', 'scaler_mean', 'scaler_scale'):
            array = np.asarray(getattr(self, name), dtype=np.float64)
            if array.shape != (FEATURE_COUNT,):
                raise DataError(f"Model {name} must have {FEATURE_COUNT} entries, got shape {array.shape}")
            setattr(self, name, array)
        if np.any(self.scaler_scale <= 0.0):
            raise DataError("Model scaler standard deviations must be positive")
        if not math.isfinite(self.theta) or not math.isfinite(self.theta1):
            raise DataError("Model thresholds must be finite")

    def standardize(self, values: np.ndarray) -> np.ndarray:
        return (values - self.scaler_mean) / self.scaler_scale

    def score_values(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, self.standardize(values)) + self.bias)

    def score_matrix(self, matrix: np.ndarray) -> np.ndarray:
        return self.standardize(matrix) @ self.weights + self.bias

    def label_for(self, score: float) -> str:
        return RUMOUR if score > self.theta else NON_RUMOUR


@dataclass
class TrainReport:
    round1_train_accuracy: float
    round2_train_accuracy: float
    theta1: float
    theta: float
    support: Dict[str, int]
    pf_weight: float = 0.0
    pf_admitted: int = 0

    def to_lines(self) -> List[str]:
        return [
            f"round1_train_accuracy={self.round1_train_accuracy:.6f}",
            f"round2_train_accuracy={self.round2_train_accuracy:.6f}",
            f"theta1={self.theta1:.6f}",
            f"theta={self.theta:.6f}",
            f"pf_weight={self.pf_weight:.6f}",
            f"pf_admitted={self.pf_admitted}",
        ] + [f"support_{label}={count}" for label, count in sorted(self.support.items())]


def _section(payload: bytes) -> bytes:
    return struct.pack('<Q', len(payload)) + payload


def model_to_bytes(model: Model) -> bytes:
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(struct.pack('<I', MODEL_VERSION))
    out.write(_section(model.manifest_hash.encode('ascii')))
    out.write(struct.pack('<4dQ', model.theta, model.theta1, model.bias, model.pf.threshold, model.pf.capacity))
    for array in (model.scaler_mean, model.scaler_scale, model.weights):
        out.write(array.astype('<f8').tobytes())
    out.write(_section(json.dumps(model.settings, sort_keys=True, separators=(',', ':')).encode('utf-8')))
    vocab_text = model.keyword_vocab.to_text() if model.keyword_vocab is not None else ''
    out.write(_section(vocab_text.encode('utf-8')))
    return out.getvalue()


def model_from_bytes(raw: bytes, expected_manifest_hash: Optional[str] = None) -> Model:
    pos = 0

    def take(size: int) -> bytes:
        nonlocal pos
        if pos + size > len(raw):
            raise ModelFormatError(f"Model file truncated at byte {pos}")
        chunk = raw[pos:pos + size]
        pos += size
        return chunk

    def section() -> bytes:
        (size,) = struct.unpack('<Q', take(8))
        return take(size)

    if take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise ModelFormatError("Not a rumour model file (bad magic)")
    (version,) = struct.unpack('<I', take(4))
    if version != MODEL_VERSION:
        raise ModelFormatError(f"Unsupported model file version {version}, expected {MODEL_VERSION}")

    try:
        manifest_hash = section().decode('ascii')
        if expected_manifest_hash is not None and manifest_hash != expected_manifest_hash:
            raise ManifestMismatchError(expected_manifest_hash, manifest_hash)
        theta, theta1, bias, pf_threshold, pf_capacity = struct.unpack('<4dQ', take(struct.calcsize('<4dQ')))
        arrays = [np.frombuffer(take(8 * FEATURE_COUNT), dtype='<f8').astype(np.float64) for _ in range(3)]
        settings = json.loads(section().decode('utf-8'))
        vocab_text = section().decode('utf-8')
        if pos != len(raw):
            raise ModelFormatError(f"Model file has {len(raw) - pos} trailing bytes")
        keyword_vocab = Vocabulary.from_text(vocab_text) if vocab_text else None
        return Model(weights=arrays[2], bias=bias, scaler_mean=arrays[0], scaler_scale=arrays[1],
                     theta=theta, theta1=theta1, pf=PfConfig(pf_capacity, pf_threshold),
                     manifest_hash=manifest_hash, settings=settings, keyword_vocab=keyword_vocab)
    except (ModelFormatError, ManifestMismatchError):
        raise
    except (DataError, ValueError, UnicodeDecodeError, struct.error) as e:
        raise ModelFormatError(f"Corrupt model file: {e}") from e


def save_model(model: Model, path: str) -> int:
    payload = model_to_bytes(model)
    with open(path, 'wb') as handle:
        handle.write(payload)
    logger.info(f"Wrote model {path} ({len(payload)} bytes, theta={model.theta:.6f})")
    return len(payload)


def load_model(path: str, expected_manifest_hash: Optional[str] = None) -> Model:
    with open(path, 'rb') as handle:
        model = model_from_bytes(handle.read(), expected_manifest_hash)
    logger.info(f"Loaded model {path} (theta={model.theta:.6f}, pf k={model.pf.capacity})")
    return model


def export_weights_csv(model: Model, manifest: FeatureManifest) -> str:
    """Human-readable ``name,category,weight`` table followed by bias and thresholds"""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(['name', 'category', 'weight'])
    for entry, weight in zip(manifest.entries, model.weights):
        writer.writerow([entry.name, entry.category, repr(float(weight))])
    writer.writerow(['bias', '', repr(model.bias)])
    writer.writerow(['theta', '', repr(model.theta)])
    writer.writerow(['theta1', '', repr(model.theta1)])
    return out.getvalue()
