"""
Evaluation: accuracy, DET curves, feature-group ablation, throughput
benchmarking and the paired sign test.
"""

import csv
import gc
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import psutil
from scipy.stats import binomtest

from app.models.errors import DataError
from app.models.feature_manifest import FeatureManifest
from app.models.records import RUMOUR, Message, TokenizedDoc, Verdict
from app.services.detection_service import DetectionPipeline
from app.services.feature_service import FeatureExtractor
from app.services.training_service import (TrainingOptions, TrainingSet, accuracy_by_threshold,
                                           candidate_thresholds, train_two_rounds)

logger = logging.getLogger(__name__)


def _gold_flags(verdicts: Sequence[Verdict]) -> np.ndarray:
    missing = [verdict.doc_id for verdict in verdicts if verdict.gold_label is None]
    if missing:
        raise DataError(f"Verdicts without gold labels: {', '.join(missing[:5])}")
    return np.array([verdict.gold_label == RUMOUR for verdict in verdicts], dtype=bool)


def accuracy(verdicts: Sequence[Verdict]) -> float:
    """Fraction of verdicts whose label matches the gold label"""
    if not verdicts:
        raise DataError("Cannot compute accuracy of zero verdicts")
    gold = _gold_flags(verdicts)
    predicted = np.array([verdict.label == RUMOUR for verdict in verdicts], dtype=bool)
    return float(np.mean(predicted == gold))


def accuracy_at_threshold(scores: Sequence[float], is_rumour: Sequence[bool], threshold: float) -> float:
    if len(scores) == 0:
        raise DataError("Cannot compute accuracy of zero scores")
    return float(accuracy_by_threshold(scores, is_rumour, np.array([threshold]))[0])


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    miss: float
    false_alarm: float


@dataclass
class DetCurve:
    """Miss and false-alarm probabilities over increasing thresholds"""
    points: List[DetPoint]

    def __len__(self) -> int:
        return len(self.points)

    def equal_error_rate(self) -> float:
        """Mean of miss and false alarm at the point where they are closest"""
        best = min(self.points, key=lambda point: (abs(point.miss - point.false_alarm), point.threshold))
        return (best.miss + best.false_alarm) / 2.0

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(['threshold', 'miss', 'false_alarm'])
        for point in self.points:
            writer.writerow([repr(point.threshold), repr(point.miss), repr(point.false_alarm)])
        return out.getvalue()


def det_curve(scores: Sequence[float], is_rumour: Sequence[bool], num_thresholds: Optional[int] = None) -> DetCurve:
    """DET points at every candidate threshold (rumour iff score > threshold)"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(is_rumour, dtype=bool)
    positives = int(labels.sum())
    negatives = len(labels) - positives
    if positives == 0 or negatives == 0:
        raise DataError("DET curve needs both rumour and non-rumour examples")

    thresholds = candidate_thresholds(scores)
    if num_thresholds is not None:
        if num_thresholds < 2:
            raise DataError("num_thresholds must be at least 2")
        if num_thresholds < len(thresholds):
            picks = np.unique(np.round(np.linspace(0, len(thresholds) - 1, num_thresholds)).astype(int))
            thresholds = thresholds[picks]

    order = np.argsort(scores, kind='stable')
    sorted_scores = scores[order]
    rumours_at_or_below = np.concatenate(([0], np.cumsum(labels[order])))
    below = np.searchsorted(sorted_scores, thresholds, side='right')
    misses = rumours_at_or_below[below]
    false_alarms = negatives - (below - misses)

    points = [DetPoint(float(t), float(m) / positives, float(fa) / negatives)
              for t, m, fa in zip(thresholds, misses, false_alarms)]
    return DetCurve(points)


@dataclass
class AblationReport:
    baseline: float
    rows: List[Tuple[str, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(['group', 'accuracy'])
        writer.writerow(['baseline', f"{self.baseline:.6f}"])
        for group, value in self.rows:
            writer.writerow([group, f"{value:.6f}"])
        return out.getvalue()


class Experiment:
    """Train both rounds and detect on a held-out stream, optionally with columns removed"""

    def __init__(self, extractor: FeatureExtractor, training: TrainingSet, test: Sequence[Message],
                 options: TrainingOptions, test_docs: Optional[Sequence[TokenizedDoc]] = None):
        self.extractor = extractor
        self.training = training
        self.test = list(test)
        self.test_docs = list(test_docs) if test_docs is not None else [extractor.tokenize(m) for m in self.test]
        self.options = options

    def verdicts(self, masked: Sequence[int] = ()) -> List[Verdict]:
        training = self.training.with_mask(masked) if masked else self.training
        model, _ = train_two_rounds(training, self.options, self.extractor.keyword_vocab)
        pipeline = DetectionPipeline(model, self.extractor, on_error='abort', masked=masked)
        return list(pipeline.run(self.test, self.test_docs))

    def accuracy(self, masked: Sequence[int] = ()) -> float:
        return accuracy(self.verdicts(masked))


def ablate(experiment: Experiment, manifest: FeatureManifest, groups: Sequence[str]) -> AblationReport:
    """Retrain and re-detect with each group's columns zeroed"""
    columns = {group: manifest.group_indices(group) for group in groups}
    report = AblationReport(baseline=experiment.accuracy())
    logger.info(f"Ablation baseline accuracy {report.baseline:.4f}")
    for group in groups:
        value = experiment.accuracy(columns[group])
        report.rows.append((group, value))
        logger.info(f"Without {group}: accuracy {value:.4f} ({value - report.baseline:+.4f})")
    return report


def regression_slope(values: Sequence[float]) -> float:
    """Least-squares slope of values against their index"""
    if len(values) < 2:
        return 0.0
    x = np.arange(len(values), dtype=np.float64)
    return float(np.polyfit(x, np.asarray(values, dtype=np.float64), 1)[0])


@dataclass
class BenchReport:
    total_docs: int
    docs_per_second: float
    batches: List[Tuple[int, float]]
    slope: float
    runs: int
    pinned_cpu: Optional[int] = None

    @property
    def mean_latency_us(self) -> float:
        return float(np.mean([latency for _, latency in self.batches])) if self.batches else 0.0

    @property
    def relative_slope(self) -> float:
        mean = self.mean_latency_us
        return abs(self.slope) / mean if mean else 0.0

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(['batch', 'mean_latency_us'])
        for batch, latency in self.batches:
            writer.writerow([batch, f"{latency:.3f}"])
        out.write(f"# total_docs={self.total_docs} docs_per_second={self.docs_per_second:.1f} "
                  f"slope_us_per_batch={self.slope:.6f} relative_slope={self.relative_slope:.6f} "
                  f"runs={self.runs}\n")
        return out.getvalue()


def _pin_to_one_cpu() -> Tuple[Optional[int], Optional[List[int]]]:
    process = psutil.Process()
    try:
        previous = process.cpu_affinity()
        cpu = previous[0]
        process.cpu_affinity([cpu])
        return cpu, previous
    except (AttributeError, psutil.Error, OSError) as e:
        logger.warning(f"CPU pinning unavailable on this platform: {e}")
        return None, None


def _restore_affinity(previous: Optional[List[int]]):
    if previous:
        try:
            psutil.Process().cpu_affinity(previous)
        except (psutil.Error, OSError) as e:
            logger.warning(f"Could not restore CPU affinity: {e}")


def bench(pipeline_factory: Callable[[], DetectionPipeline], messages: Sequence[Message],
          docs: Sequence[TokenizedDoc], batch_size: int, runs: int = 5, pin_cpu: bool = True) -> BenchReport:
    """Time the scoring loop over pre-tokenized messages.

    One untimed warm-up pass, then ``runs`` timed passes with a fresh
    pipeline each; per-batch latencies are averaged over the timed passes.
    """
    total = len(messages)
    if batch_size < 1 or total == 0 or total < 10 * batch_size:
        raise DataError(f"Benchmark needs at least 10 batches: {total} docs, batch size {batch_size}")
    if len(docs) != total:
        raise DataError("Benchmark needs one tokenized doc per message")

    cpu, previous = _pin_to_one_cpu() if pin_cpu else (None, None)
    collecting = gc.isenabled()
    num_batches = total // batch_size
    latency_sums = np.zeros(num_batches, dtype=np.float64)
    rates = []
    try:
        warmup = pipeline_factory()
        for msg, doc in zip(messages, docs):
            warmup.process(msg, doc)
        # collector off while timing, as timeit does
        gc.collect()
        gc.disable()

        for run in range(runs):
            pipeline = pipeline_factory()
            per_doc = np.empty(total, dtype=np.float64)
            run_start = time.perf_counter()
            for i, (msg, doc) in enumerate(zip(messages, docs)):
                started = time.perf_counter_ns()
                pipeline.process(msg, doc)
                per_doc[i] = (time.perf_counter_ns() - started) / 1000.0
            elapsed = time.perf_counter() - run_start
            rates.append(total / elapsed)
            latency_sums += per_doc[:num_batches * batch_size].reshape(num_batches, batch_size).mean(axis=1)
            logger.info(f"Benchmark run {run + 1}/{runs}: {total / elapsed:.1f} docs/s")
    finally:
        if collecting:
            gc.enable()
        _restore_affinity(previous)

    latencies = latency_sums / runs
    batches = [(index, float(value)) for index, value in enumerate(latencies)]
    return BenchReport(total_docs=total, docs_per_second=float(np.mean(rates)), batches=batches,
                       slope=regression_slope(latencies), runs=runs, pinned_cpu=cpu)


@dataclass(frozen=True)
class SignTestResult:
    wins_a: int
    wins_b: int
    p_value: float


def sign_test(verdicts_a: Sequence[Verdict], verdicts_b: Sequence[Verdict]) -> SignTestResult:
    """Two-sided exact sign test over messages exactly one of the two runs got right"""
    by_id = {verdict.doc_id: verdict for verdict in verdicts_b}
    wins_a = wins_b = 0
    for verdict in verdicts_a:
        other = by_id.get(verdict.doc_id)
        if other is None:
            raise DataError(f"Message '{verdict.doc_id}' missing from the second verdict set")
        if verdict.gold_label is None:
            raise DataError(f"Message '{verdict.doc_id}' has no gold label")
        correct_a = verdict.label == verdict.gold_label
        correct_b = other.label == verdict.gold_label
        if correct_a and not correct_b:
            wins_a += 1
        elif correct_b and not correct_a:
            wins_b += 1

    discordant = wins_a + wins_b
    p_value = 1.0 if discordant == 0 else float(binomtest(wins_a, discordant, 0.5).pvalue)
    return SignTestResult(wins_a, wins_b, p_value)
