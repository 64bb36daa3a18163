"""
Tests for threshold selection and two-round training
"""
import numpy as np
import pytest

from app.models.errors import DataError, ManifestMismatchError
from app.models.feature_manifest import FEATURE_COUNT, PF_INDEX, FeatureVector
from app.models.vocabulary import TfIdfVector
from app.services.pseudo_feedback import PfConfig
from app.services.training_service import (TrainingOptions, TrainingSet, build_training_set, candidate_thresholds,
                                           classify, fit_linear_svm, optimal_threshold, rumour_score,
                                           train_round1, train_round2, train_two_rounds)
from tests.conftest import make_message

def echo_training_set():
    """Rumours flagged by column 0, plus echoes that only repeat an earlier rumour's terms"""
    doc_ids, novelty, labels, vectors = [], [], [], []

    def add(doc_id, flagged, rumour, weights):
        doc_ids.append(doc_id)
        novelty.append(1.0 if flagged else 0.0)
        labels.append(rumour)
        vectors.append(TfIdfVector.from_weights(weights))

    for j in range(10):
        add(f"base-{j}", True, True, {j: 1.0, 50 + j: 0.5})
        add(f"plain-{2 * j}", False, False, {100 + 2 * j: 1.0})
        if j < 6:
            add(f"echo-{j}", False, True, {j: 2.0, 50 + j: 1.0})
        add(f"plain-{2 * j + 1}", False, False, {101 + 2 * j: 1.0})

    features = np.zeros((len(doc_ids), FEATURE_COUNT), dtype=np.float64)
    features[:, 0] = novelty
    return TrainingSet(doc_ids=doc_ids, timestamps=list(range(len(doc_ids))), features=features,
                       is_rumour=np.array(labels, dtype=bool), doc_vectors=vectors, manifest_hash='echo-fixture')


@pytest.fixture(scope='module')
def training(small_synthetic, small_synthetic_extractor):
    items = [small_synthetic_extractor.extract(msg) for msg in small_synthetic.train]
    return build_training_set(small_synthetic_extractor, items)

class TestThresholds:
    """Test the candidate threshold sweep"""

    def test_candidates(self):
        """Test candidates are midpoints plus one below the minimum and one above the maximum"""
        assert list(candidate_thresholds([1.0, 2.0, 2.0, 3.0])) == [0.0, 1.5, 2.5, 4.0]

    def test_best_accuracy(self):
        """Test the most accurate threshold is chosen"""
        theta, accuracy = optimal_threshold([0.0, 1.0, 2.0, 3.0], [False, False, True, True])
        assert theta == 1.5
        assert accuracy == 1.0

    def test_lowest_threshold_wins_ties(self):
        """Test ties resolve to the lowest threshold"""
        theta, accuracy = optimal_threshold([0.0, 1.0], [True, False])
        assert theta == -1.0
        assert accuracy == 0.5

    def test_no_scores(self):
        """Test an empty score list is a data error"""
        with pytest.raises(DataError):
            candidate_thresholds([])

class TestLinearFit:
    """Test the standardized hinge-loss SVM"""

    def test_single_class(self):
        """Test training with one class is refused"""
        with pytest.raises(DataError):
            fit_linear_svm(np.zeros((4, 3)), np.array([True] * 4), 1.0, 0, 1000)

    def test_constant_column_gets_zero_weight(self):
        """Test a constant column keeps weight 0 and unit scale"""
        features = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        fit = fit_linear_svm(features, np.array([False, False, True, True]), 1.0, 0, 1000)
        assert fit.weights[1] == 0.0
        assert fit.weights[0] > 0.0
        assert fit.scale[1] == 1.0

    def test_nothing_varies(self):
        """Test the fit is skipped when no column varies"""
        fit = fit_linear_svm(np.ones((4, 3)), np.array([False, True, False, True]), 1.0, 0, 1000)
        assert not fit.weights.any()
        assert fit.bias == 0.0

class TestTrainingSet:
    """Test training set assembly"""

    def test_sorted_by_timestamp(self, tiny_extractor):
        """Test rows come out in timestamp order"""
        items = [tiny_extractor.extract(make_message(doc_id, "the bridge", ts, 'rumour'))
                 for doc_id, ts in (('late', 9), ('early', 1), ('mid', 5))]
        training = build_training_set(tiny_extractor, items)
        assert training.doc_ids == ['early', 'mid', 'late']
        assert training.features.shape == (3, FEATURE_COUNT)

    def test_needs_labels(self, tiny_extractor):
        """Test unlabelled messages are refused"""
        items = [tiny_extractor.extract(make_message('m', "the bridge", 1))]
        with pytest.raises(DataError):
            build_training_set(tiny_extractor, items)

    def test_mask(self, training):
        """Test masking zeroes a copy and leaves the original alone"""
        masked = training.with_mask([51, 52])
        assert not masked.features[:, [51, 52]].any()
        assert masked.masked == (51, 52)
        assert training.features[:, 51].any()

class TestTwoRounds:
    """Test the two-round procedure"""

    def test_round_one_weights_survive_bit_for_bit(self, training):
        """Test round 2 leaves every non-feedback weight exactly as round 1 set it"""
        options = TrainingOptions(pf_capacity=20)
        round1 = train_round1(training, options.c, options.seed, options.max_iter)
        model, _ = train_two_rounds(training, options)
        assert np.array_equal(model.weights[:PF_INDEX], round1.fit.weights[:PF_INDEX])
        assert np.array_equal(model.scaler_mean[:PF_INDEX], round1.fit.mean[:PF_INDEX])
        assert model.theta1 == round1.theta1
        assert round1.fit.weights[PF_INDEX] == 0.0

    def test_training_is_deterministic(self, training):
        """Test two runs give identical weights and thresholds"""
        first, _ = train_two_rounds(training, TrainingOptions())
        second, _ = train_two_rounds(training, TrainingOptions())
        assert np.array_equal(first.weights, second.weights)
        assert first.theta == second.theta

    def test_zero_capacity_means_zero_pf_weight(self, training):
        """Test a disabled buffer leaves the feedback weight at 0"""
        model, report = train_two_rounds(training, TrainingOptions(pf_capacity=0))
        assert model.weights[PF_INDEX] == 0.0
        assert report.pf_admitted == 0
        assert model.pf.capacity == 0

    def test_default_admission_threshold_is_theta1(self, training):
        """Test admission defaults to the round-1 threshold unless one is given"""
        model, _ = train_two_rounds(training, TrainingOptions())
        assert model.pf.threshold == model.theta1
        fixed, _ = train_two_rounds(training, TrainingOptions(pf_threshold=-0.5))
        assert fixed.pf.threshold == -0.5

    def test_separable_synthetic_data(self, training):
        """Test both rounds fit the small synthetic stream well"""
        _, report = train_two_rounds(training, TrainingOptions())
        assert report.round1_train_accuracy >= 0.9
        assert report.round2_train_accuracy >= 0.9
        assert sum(report.support.values()) == len(training)

    def test_echoes_earn_positive_pf_weight(self):
        """Test rumours repeating earlier rumours give the feedback feature a positive weight"""
        echoes = echo_training_set()
        model, report = train_two_rounds(echoes, TrainingOptions())
        assert report.pf_admitted == 10
        assert report.pf_weight > 0.0
        assert model.weights[PF_INDEX] == report.pf_weight
        assert report.round2_train_accuracy > report.round1_train_accuracy

    def test_joint_round_two(self, training):
        """Test joint refitting reports the weight it stores"""
        options = TrainingOptions(joint_round2=True)
        round1 = train_round1(training)
        model, report = train_round2(training, round1, PfConfig(100, round1.theta1), options)
        assert report.pf_weight == model.weights[PF_INDEX]

    def test_masked_pf_column(self, training):
        """Test a masked feedback column admits nothing and keeps weight 0"""
        model, report = train_two_rounds(training.with_mask([PF_INDEX]), TrainingOptions())
        assert model.weights[PF_INDEX] == 0.0
        assert report.pf_admitted == 0

class TestScoring:
    """Test scoring and classification"""

    def test_score_and_label(self, training):
        """Test a single vector scores like the batch path and labels strictly above theta"""
        model, _ = train_two_rounds(training, TrainingOptions())
        row = training.features[0]
        score = rumour_score(model, FeatureVector(row.copy(), training.manifest_hash))
        assert score == pytest.approx(model.score_matrix(row[None, :])[0])
        assert classify(model, model.theta) == 'non-rumour'
        assert classify(model, model.theta + 1e-9) == 'rumour'

    def test_manifest_mismatch(self, training):
        """Test vectors from another manifest are refused"""
        model, _ = train_two_rounds(training, TrainingOptions())
        with pytest.raises(ManifestMismatchError):
            rumour_score(model, FeatureVector(np.zeros(FEATURE_COUNT), 'other-manifest'))
