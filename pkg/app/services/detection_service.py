"""
Single-pass streaming detection

Each message is tokenized, scored and classified before the next one is
read; the pseudo-feedback buffer carries the only state between messages.
"""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from app.models.errors import DataError, ManifestMismatchError
from app.models.feature_manifest import FEATURE_COUNT, PF_INDEX
from app.models.records import RUMOUR, Message, TokenizedDoc, Verdict
from app.models.rumour_model import Model
from app.services.feature_service import FeatureExtractor
from app.services.novelty_service import insert_document
from app.services.pseudo_feedback import PfBuffer, maybe_admit, pf_feature
from app.services.training_service import classify, rumour_score

logger = logging.getLogger(__name__)

VERDICT_HEADER = ['doc_id', 'timestamp', 'rumour_score', 'label', 'gold']
PARALLEL_CHUNK = 256


class DetectionPipeline:
    """Streaming rumour detector with per-message error containment"""

    def __init__(self, model: Model, extractor: FeatureExtractor, on_error: str = 'skip',
                 accumulate_stream: bool = False, debug: bool = False, workers: int = 1,
                 masked: Sequence[int] = (), buffer: Optional[PfBuffer] = None):
        if model.manifest_hash != extractor.manifest_hash:
            raise ManifestMismatchError(model.manifest_hash, extractor.manifest_hash)
        if on_error not in ('skip', 'abort'):
            raise DataError(f"Unknown on_error policy '{on_error}'")

        self.model = model
        self.extractor = extractor
        self.on_error = on_error
        self.accumulate_stream = accumulate_stream
        self.debug = debug
        self.workers = workers
        self.masked = tuple(sorted(set(masked)))
        self.buffer = buffer if buffer is not None else PfBuffer(model.pf.capacity)
        self.stats = {
            'processed': 0,
            'skipped': 0,
            'rumours': 0,
            'elapsed_seconds': 0.0,
            'errors_by_type': {},
        }

        if workers > 1 and not self.parallel_allowed:
            logger.warning("Parallel detection needs pf capacity 0 and no stream accumulation; running sequentially")

    @property
    def parallel_allowed(self) -> bool:
        return self.model.pf.capacity == 0 and not self.accumulate_stream

    def _vector_values(self, extracted, pf: float) -> Tuple[float, np.ndarray]:
        fv = self.extractor.vector(extracted, pf)
        if self.masked:
            fv.values[list(self.masked)] = 0.0
        return rumour_score(self.model, fv), fv.values

    def _verdict(self, msg: Message, score: float, values: np.ndarray) -> Verdict:
        return Verdict(
            doc_id=msg.id,
            timestamp=msg.timestamp,
            rumour_score=score,
            label=classify(self.model, score),
            gold_label=msg.label,
            feature_vector=values.tolist() if self.debug else None,
        )

    def process(self, msg: Message, doc: Optional[TokenizedDoc] = None) -> Verdict:
        """Score one message and update the pseudo-feedback buffer"""
        extracted = self.extractor.extract(msg, doc)
        pf = 0.0 if PF_INDEX in self.masked else pf_feature(self.buffer, extracted.doc_vector)
        score, values = self._vector_values(extracted, pf)
        maybe_admit(self.buffer, msg.id, extracted.doc_vector, score, self.model.pf)
        if self.accumulate_stream:
            insert_document(self.extractor.memory.kterms, extracted.doc.unique_terms)
        return self._verdict(msg, score, values)

    def _score_stateless(self, item: Tuple[Message, Optional[TokenizedDoc]]) -> Union[Verdict, Exception]:
        msg, doc = item
        try:
            extracted = self.extractor.extract(msg, doc)
            score, values = self._vector_values(extracted, 0.0)
            return self._verdict(msg, score, values)
        except DataError as e:
            return e

    def _handle_error(self, msg: Message, error: Exception):
        kind = type(error).__name__
        self.stats['errors_by_type'][kind] = self.stats['errors_by_type'].get(kind, 0) + 1
        if self.on_error == 'abort':
            logger.error(f"Aborting stream at message '{msg.id}': {error}")
            raise error
        self.stats['skipped'] += 1
        logger.warning(f"Skipping message '{msg.id}': {error}")

    def _record(self, verdict: Verdict):
        self.stats['processed'] += 1
        if verdict.label == RUMOUR:
            self.stats['rumours'] += 1

    def _run_sequential(self, items: Iterable[Tuple[Message, Optional[TokenizedDoc]]]) -> Iterator[Verdict]:
        for msg, doc in items:
            try:
                verdict = self.process(msg, doc)
            except DataError as e:
                self._handle_error(msg, e)
                continue
            self._record(verdict)
            yield verdict

    def _run_parallel(self, items: Iterable[Tuple[Message, Optional[TokenizedDoc]]]) -> Iterator[Verdict]:
        # executor.map keeps input order, so output follows the stream
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            chunk: List[Tuple[Message, Optional[TokenizedDoc]]] = []
            for item in items:
                chunk.append(item)
                if len(chunk) == PARALLEL_CHUNK:
                    yield from self._drain(chunk, executor)
                    chunk = []
            if chunk:
                yield from self._drain(chunk, executor)

    def _drain(self, chunk, executor) -> Iterator[Verdict]:
        for (msg, _), outcome in zip(chunk, executor.map(self._score_stateless, chunk)):
            if isinstance(outcome, Exception):
                self._handle_error(msg, outcome)
                continue
            self._record(outcome)
            yield outcome

    def run(self, stream: Iterable[Message], docs: Optional[Iterable[TokenizedDoc]] = None) -> Iterator[Verdict]:
        """Yield one verdict per message, in stream order"""
        items = zip(stream, docs) if docs is not None else ((msg, None) for msg in stream)
        start = time.perf_counter()
        try:
            if self.workers > 1 and self.parallel_allowed:
                yield from self._run_parallel(items)
            else:
                yield from self._run_sequential(items)
        finally:
            self.stats['elapsed_seconds'] += time.perf_counter() - start
            logger.info(f"Detection finished: {self.stats['processed']} verdicts, "
                        f"{self.stats['skipped']} skipped, {self.stats['rumours']} rumours")

    def get_service_stats(self) -> Dict[str, Any]:
        stats = dict(self.stats)
        stats['errors_by_type'] = dict(self.stats['errors_by_type'])
        stats['buffer'] = self.buffer.get_buffer_stats()
        stats['kterms_inserted'] = self.extractor.memory.kterms.inserted_counts()
        return stats


def run_stream(model: Model, extractor: FeatureExtractor, stream: Iterable[Message],
               buffer: Optional[PfBuffer] = None, **options) -> Iterator[Verdict]:
    pipeline = DetectionPipeline(model, extractor, buffer=buffer, **options)
    return pipeline.run(stream)


def write_verdicts(verdicts: Iterable[Verdict], handle: TextIO, debug: bool = False) -> int:
    """CSV with scores at six decimals; debug adds the 58 feature columns"""
    writer = csv.writer(handle, lineterminator='\n')
    header = list(VERDICT_HEADER)
    if debug:
        header += [f"f{i}" for i in range(FEATURE_COUNT)]
    writer.writerow(header)
    count = 0
    for verdict in verdicts:
        row = [verdict.doc_id, verdict.timestamp, f"{verdict.rumour_score:.6f}", verdict.label,
               verdict.gold_label or '']
        if debug:
            values = verdict.feature_vector or [0.0] * FEATURE_COUNT
            row += [repr(float(value)) for value in values]
        writer.writerow(row)
        count += 1
    return count
