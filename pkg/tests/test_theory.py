import numpy as np
import pytest
from numpy.testing import assert_allclose

from mixup_inference.analysis.oracle import LinearOracle, NormResidual, OraclePoint
from mixup_inference.analysis.theory import check_ric, delta_f, detection_gap, ric_curves, ric_rows
from mixup_inference.config import ArchitectureKind, MIConfig, MIVariant
from mixup_inference.data import AdversarialTriplet, LabelDistribution, SamplePool
from mixup_inference.errors import EmptyEvaluationError, RejectedInputError
from mixup_inference.nn import Architecture, Classifier


def test_detection_gap_is_the_same_for_both_variants():
    rng = np.random.default_rng(0)
    for _ in range(100):
        num_classes = int(rng.integers(2, 20))
        y = int(rng.integers(num_classes))
        lam = float(rng.uniform(0.05, 1.0))
        oracle = LinearOracle(num_classes, NormResidual(rng.normal(size=num_classes), norm=float(rng.uniform(0, 2))))
        gaps = [
            detection_gap(oracle, [OraclePoint(y, 0)], [OraclePoint(y, 1)], MIConfig(variant=v, lam=lam)).gap
            for v in (MIVariant.PL, MIVariant.OL)
        ]
        assert gaps[0] == pytest.approx(gaps[1], abs=1e-12)


def test_zero_residual_gap():
    oracle = LinearOracle(10)
    for lam in (0.2, 0.5, 0.9):
        for variant in (MIVariant.PL, MIVariant.OL):
            dg = detection_gap(oracle, [OraclePoint(3, 0)], [OraclePoint(3, 1)], MIConfig(variant=variant, lam=lam))
            assert dg.gap == pytest.approx(1 - lam)
            assert dg.written_form == pytest.approx(-(1 - lam))


def test_detection_gap_needs_both_sets():
    with pytest.raises(RejectedInputError):
        detection_gap(LinearOracle(3), [], [OraclePoint(0, 1)], MIConfig())


def _direction(num_classes: int) -> np.ndarray:
    d = np.zeros(num_classes)
    d[0], d[1] = -1.0, 1.0
    return d


def test_zero_residual_fails_the_condition():
    report = check_ric(LinearOracle(3), [OraclePoint(0, 1)], MIConfig(variant=MIVariant.PL, lam=0.5))
    assert report.true.gap == 0.0 and not report.satisfied


def test_large_norm_residual_satisfies_pl():
    oracle = LinearOracle(3, NormResidual(_direction(3), norm=2.0))
    report = check_ric(oracle, [OraclePoint(0, 1)], MIConfig(variant=MIVariant.PL, lam=0.5))
    assert report.true.gap == pytest.approx(-1.0)
    assert report.adversarial.gap == pytest.approx(1.0)
    assert report.satisfied


def test_ol_condition_holds_where_pl_fails():
    oracle = LinearOracle(2, NormResidual(_direction(2), norm=0.3))
    ol = check_ric(oracle, [OraclePoint(0, 1)], MIConfig(variant=MIVariant.OL, lam=0.5))
    pl = check_ric(oracle, [OraclePoint(0, 1)], MIConfig(variant=MIVariant.PL, lam=0.5))
    assert ol.satisfied and not pl.satisfied


def test_oracle_gap_is_all_shrinkage():
    oracle = LinearOracle(4, NormResidual(_direction(4), norm=0.5))
    report = check_ric(oracle, [OraclePoint(0, 1)] * 3, MIConfig(variant=MIVariant.OL, lam=0.4))
    for part in (report.true, report.adversarial):
        assert part.transfer == 0.0
        assert part.gap == pytest.approx(part.shrinkage)
        assert part.stderr == 0.0


def test_ric_rejects_clean_points_and_combined():
    with pytest.raises(RejectedInputError):
        check_ric(LinearOracle(3), [OraclePoint(0, 0)], MIConfig(variant=MIVariant.PL))
    with pytest.raises(RejectedInputError):
        check_ric(LinearOracle(3), [OraclePoint(0, 1)], MIConfig(variant=MIVariant.COMBINED))


@pytest.fixture
def linear() -> Classifier:
    """Feature i votes for class i, so one-hot pixel images are classified by position."""
    model = Classifier.build(Architecture(ArchitectureKind.LINEAR, (1, 2, 2), 3), seed=0, dtype=np.float64)
    weight = np.zeros((4, 3))
    weight[0, 0] = weight[1, 1] = weight[2, 2] = 5.0
    model.layers[-1].weight.data[...] = weight
    model.layers[-1].bias.data[...] = 0.0
    return model


def _pixel(i: int) -> np.ndarray:
    x = np.zeros(4)
    x[i] = 1.0
    return x.reshape(1, 2, 2)


@pytest.fixture
def small_pool() -> SamplePool:
    rng = np.random.default_rng(7)
    return SamplePool(
        buckets={k: rng.random((2, 1, 2, 2)) for k in range(3)},
        marginal=LabelDistribution.uniform(3),
    )


@pytest.mark.parametrize("variant", [MIVariant.PL, MIVariant.OL])
def test_classifier_gap_splits_into_transfer_and_shrinkage(linear, small_pool, variant):
    assert linear.predict(np.stack([_pixel(0), _pixel(1)])).tolist() == [0, 1]
    triplet = AdversarialTriplet.adversarial(_pixel(0), _pixel(1), 0, 1.0, index=0)
    report = check_ric(linear, [triplet], MIConfig(variant=variant, lam=0.6), small_pool)
    assert report.count == 1
    for part in (report.true, report.adversarial):
        assert part.gap == pytest.approx(part.transfer + part.shrinkage, abs=1e-12)


def test_failed_attacks_are_not_counted(linear, small_pool):
    triplet = AdversarialTriplet.adversarial(_pixel(0), _pixel(0), 0, 0.1, index=0)
    with pytest.raises(EmptyEvaluationError):
        check_ric(linear, [triplet], MIConfig(variant=MIVariant.PL, lam=0.5), small_pool)


def test_delta_f(linear, small_pool):
    x = _pixel(2)
    assert np.array_equal(delta_f(linear, x, MIConfig(lam=1.0), small_pool), np.zeros(3))
    shift = delta_f(linear, x, MIConfig(variant=MIVariant.OL, lam=0.5), small_pool)
    assert shift.sum() == pytest.approx(0.0, abs=1e-12)
    assert_allclose(delta_f(LinearOracle(5), OraclePoint(2, 0), MIConfig(variant=MIVariant.PL, lam=0.3)), np.zeros(5))
    with pytest.raises(RejectedInputError):
        delta_f(linear, x, MIConfig(), None)


def test_ric_curves_and_rows():
    oracle = LinearOracle(3, NormResidual(_direction(3), norm=2.0))
    with pytest.raises(RejectedInputError):
        ric_curves(oracle, [OraclePoint(0, 1)], MIVariant.PL, (0.0, 0.5), MIConfig())
    reports = ric_curves(oracle, [OraclePoint(0, 1)], MIVariant.PL, (0.5, 1.0), MIConfig())
    assert [r.lam for r in reports] == [0.5, 1.0]
    rows = ric_rows(reports)
    assert len(rows) == 4
    y_row, yhat_row = rows[0], rows[1]
    assert y_row[2] == "y" and float(y_row[4]) == -float(y_row[3])
    assert yhat_row[2] == "y_hat" and float(yhat_row[4]) == float(yhat_row[3])
    assert rows[3][-1] == 0
