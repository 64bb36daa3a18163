"""
Two-round training of the linear rumour model

Round 1 fits every weight except pseudo feedback. Round 2 replays the
training stream in timestamp order with round-1 scores to build the
pseudo-feedback column, refits, and keeps only the pseudo-feedback weight
and the refreshed bias on top of the frozen round-1 weights.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.preprocessing import StandardScaler
from sklearn.svm import LinearSVC

from app.models.errors import DataError, ManifestMismatchError
from app.models.feature_manifest import FEATURE_COUNT, PF_INDEX, FeatureVector
from app.models.records import NON_RUMOUR, RUMOUR
from app.models.rumour_model import Model, TrainReport
from app.models.vocabulary import TfIdfVector, Vocabulary
from app.services.feature_service import ExtractedMessage, FeatureExtractor
from app.services.pseudo_feedback import PfBuffer, PfConfig, maybe_admit, pf_feature

logger = logging.getLogger(__name__)


def rumour_score(model: Model, fv: FeatureVector) -> float:
    """w . standardize(fv) + bias"""
    if fv.manifest_hash != model.manifest_hash:
        raise ManifestMismatchError(model.manifest_hash, fv.manifest_hash)
    return model.score_values(fv.values)


def classify(model: Model, score: float) -> str:
    return model.label_for(score)


def candidate_thresholds(scores: Sequence[float]) -> np.ndarray:
    """Midpoints between adjacent distinct scores plus min - 1 and max + 1, ascending"""
    distinct = np.unique(np.asarray(scores, dtype=np.float64))
    if len(distinct) == 0:
        raise DataError("Cannot choose a threshold without scores")
    midpoints = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate(([distinct[0] - 1.0], midpoints, [distinct[-1] + 1.0]))


def accuracy_by_threshold(scores: Sequence[float], is_rumour: Sequence[bool],
                          thresholds: np.ndarray) -> np.ndarray:
    """Accuracy of ``score > t`` for every threshold t"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(is_rumour, dtype=bool)
    order = np.argsort(scores, kind='stable')
    sorted_scores = scores[order]
    rumours_at_or_below = np.concatenate(([0], np.cumsum(labels[order])))

    below = np.searchsorted(sorted_scores, thresholds, side='right')
    rumours_below = rumours_at_or_below[below]
    non_rumours_below = below - rumours_below
    rumours_above = int(labels.sum()) - rumours_below
    return (rumours_above + non_rumours_below) / len(scores)


def optimal_threshold(scores: Sequence[float], is_rumour: Sequence[bool]) -> Tuple[float, float]:
    """Accuracy-maximizing threshold over the candidate set; the lowest wins ties"""
    thresholds = candidate_thresholds(scores)
    accuracies = accuracy_by_threshold(scores, is_rumour, thresholds)
    best = int(np.argmax(accuracies))
    return float(thresholds[best]), float(accuracies[best])


@dataclass
class TrainingSet:
    """Labelled feature rows in chronological order"""
    doc_ids: List[str]
    timestamps: List[int]
    features: np.ndarray
    is_rumour: np.ndarray
    doc_vectors: List[TfIdfVector]
    manifest_hash: str
    masked: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.doc_ids)

    def support(self) -> Dict[str, int]:
        rumours = int(self.is_rumour.sum())
        return {RUMOUR: rumours, NON_RUMOUR: len(self) - rumours}

    def with_mask(self, columns: Sequence[int]) -> 'TrainingSet':
        """Copy with the given columns forced to zero"""
        features = self.features.copy()
        masked = tuple(sorted(set(self.masked) | set(columns)))
        features[:, list(masked)] = 0.0
        return TrainingSet(list(self.doc_ids), list(self.timestamps), features, self.is_rumour.copy(),
                           list(self.doc_vectors), self.manifest_hash, masked)


def build_training_set(extractor: FeatureExtractor, items: Sequence[ExtractedMessage]) -> TrainingSet:
    """Stack extracted messages, sorted stably by timestamp; PF column left at 0"""
    missing = [item.message.id for item in items if item.message.label is None]
    if missing:
        raise DataError(f"Training messages need gold labels; unlabelled: {', '.join(missing[:5])}")
    ordered = sorted(items, key=lambda item: item.message.timestamp)
    if ordered:
        features = np.vstack([extractor.vector(item).values for item in ordered])
    else:
        features = np.zeros((0, FEATURE_COUNT), dtype=np.float64)
    return TrainingSet(
        doc_ids=[item.message.id for item in ordered],
        timestamps=[item.message.timestamp for item in ordered],
        features=features,
        is_rumour=np.array([item.message.label == RUMOUR for item in ordered], dtype=bool),
        doc_vectors=[item.doc_vector for item in ordered],
        manifest_hash=extractor.manifest_hash,
    )


@dataclass
class LinearFit:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray


def fit_linear_svm(features: np.ndarray, is_rumour: np.ndarray, c: float, seed: int,
                   max_iter: int) -> LinearFit:
    """Hinge-loss L2 linear SVM on standardized features.

    Columns constant on the training data keep weight 0 (and unit scale);
    with no varying column at all, the fit is skipped.
    """
    if len(set(is_rumour.tolist())) < 2:
        raise DataError("Training needs both rumour and non-rumour examples")

    scaler = StandardScaler().fit(features)
    scaled = scaler.transform(features)
    active = scaler.var_ > 0.0
    weights = np.zeros(features.shape[1], dtype=np.float64)
    bias = 0.0

    if active.any():
        svm = LinearSVC(loss='hinge', C=c, dual=True, random_state=seed, max_iter=max_iter)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always', ConvergenceWarning)
            svm.fit(scaled[:, active], is_rumour.astype(int))
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            logger.warning(f"Linear SVM did not converge within {max_iter} iterations")
        weights[active] = svm.coef_.ravel()
        bias = float(svm.intercept_[0])
    else:
        logger.warning("No feature varies over the training set; all weights stay 0")

    return LinearFit(weights, bias, scaler.mean_.astype(np.float64), scaler.scale_.astype(np.float64))


@dataclass
class RoundOneResult:
    fit: LinearFit
    theta1: float
    accuracy: float
    scores: np.ndarray


def _scores(fit: LinearFit, features: np.ndarray) -> np.ndarray:
    return ((features - fit.mean) / fit.scale) @ fit.weights + fit.bias


def train_round1(training: TrainingSet, c: float = 1.0, seed: int = 0, max_iter: int = 20000) -> RoundOneResult:
    features = training.features.copy()
    features[:, PF_INDEX] = 0.0
    fit = fit_linear_svm(features, training.is_rumour, c, seed, max_iter)
    scores = _scores(fit, features)
    theta1, accuracy = optimal_threshold(scores, training.is_rumour)
    logger.info(f"Round 1: train accuracy {accuracy:.4f}, theta1 {theta1:.6f}")
    return RoundOneResult(fit, theta1, accuracy, scores)


def replay_pseudo_feedback(training: TrainingSet, scores: Sequence[float], cfg: PfConfig) -> Tuple[np.ndarray, int]:
    """PF value of every training message, admitting by the given scores in stream order"""
    column = np.zeros(len(training), dtype=np.float64)
    if PF_INDEX in training.masked:
        return column, 0
    buffer = PfBuffer(cfg.capacity)
    for row, (doc_id, vector) in enumerate(zip(training.doc_ids, training.doc_vectors)):
        column[row] = pf_feature(buffer, vector)
        maybe_admit(buffer, doc_id, vector, float(scores[row]), cfg)
    return column, buffer.admitted_total


@dataclass
class TrainingOptions:
    c: float = 1.0
    seed: int = 0
    max_iter: int = 20000
    pf_capacity: int = 100
    pf_threshold: Optional[float] = None  # None means theta1
    joint_round2: bool = False
    settings: Dict[str, Any] = field(default_factory=dict)


def train_round2(training: TrainingSet, round1: RoundOneResult, cfg: PfConfig,
                 options: TrainingOptions, keyword_vocab: Optional[Vocabulary] = None) -> Tuple[Model, TrainReport]:
    pf_column, admitted = replay_pseudo_feedback(training, round1.scores, cfg)
    features = training.features.copy()
    features[:, PF_INDEX] = pf_column
    fit = fit_linear_svm(features, training.is_rumour, options.c, options.seed, options.max_iter)

    if options.joint_round2:
        weights, mean, scale = fit.weights.copy(), fit.mean.copy(), fit.scale.copy()
    else:
        weights = round1.fit.weights.copy()
        mean = round1.fit.mean.copy()
        scale = round1.fit.scale.copy()
        weights[PF_INDEX] = fit.weights[PF_INDEX]
        mean[PF_INDEX] = fit.mean[PF_INDEX]
        scale[PF_INDEX] = fit.scale[PF_INDEX]

    final_scores = ((features - mean) / scale) @ weights + fit.bias
    theta, accuracy = optimal_threshold(final_scores, training.is_rumour)
    logger.info(f"Round 2: PF weight {weights[PF_INDEX]:.6f}, {admitted} admissions, "
                f"train accuracy {accuracy:.4f}, theta {theta:.6f}")

    model = Model(weights=weights, bias=fit.bias, scaler_mean=mean, scaler_scale=scale, theta=theta,
                  theta1=round1.theta1, pf=cfg, manifest_hash=training.manifest_hash,
                  settings=dict(options.settings), keyword_vocab=keyword_vocab)
    report = TrainReport(round1_train_accuracy=round1.accuracy, round2_train_accuracy=accuracy,
                         theta1=round1.theta1, theta=theta, support=training.support(),
                         pf_weight=float(weights[PF_INDEX]), pf_admitted=admitted)
    return model, report


def train_two_rounds(training: TrainingSet, options: TrainingOptions,
                     keyword_vocab: Optional[Vocabulary] = None) -> Tuple[Model, TrainReport]:
    logger.info(f"Training on {len(training)} messages {training.support()}")
    round1 = train_round1(training, options.c, options.seed, options.max_iter)
    threshold = round1.theta1 if options.pf_threshold is None else options.pf_threshold
    cfg = PfConfig(capacity=options.pf_capacity, threshold=threshold)
    return train_round2(training, round1, cfg, options, keyword_vocab)
