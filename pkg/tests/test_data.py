import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import kstest

from mixup_inference.data import (
    AdversarialTriplet,
    Dataset,
    LabelDistribution,
    SamplePool,
    build_sample_pool,
    gen_synthetic,
    load_cifar10,
    load_cifar100,
    load_cifar_dir,
    mixup_labels,
    mixup_pair,
    sample_from_pool,
    sample_many,
    sample_mixup_ratio,
)
from mixup_inference.errors import DatasetFormatError, MIConfigurationError, PoolConstructionError, RejectedInputError

# -- synthetic ---------------------------------------------------------------


def test_synthetic_is_seeded_and_balanced():
    a = gen_synthetic(53, 5, seed=4)
    b = gen_synthetic(53, 5, seed=4)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    counts = a.class_counts()
    assert counts.max() - counts.min() <= 1
    assert a.images.dtype == np.float32
    assert 0.0 <= a.images.min() and a.images.max() <= 1.0


def test_synthetic_splits_share_prototypes():
    train = gen_synthetic(200, 4, seed=0, noise=0.0)
    test = gen_synthetic(40, 4, seed=1, noise=0.0, split="test", prototype_seed=0)
    for label in range(4):
        assert np.array_equal(train.images[train.labels == label][0], test.images[test.labels == label][0])


@pytest.mark.parametrize("n, classes", [(3, 4), (10, 1)])
def test_synthetic_rejects_degenerate_sizes(n, classes):
    with pytest.raises(RejectedInputError):
        gen_synthetic(n, classes, seed=0)


# -- dataset -----------------------------------------------------------------


def test_dataset_validation():
    images = np.zeros((2, 1, 2, 2))
    with pytest.raises(RejectedInputError):
        Dataset(images, np.array([0, 3]), 3)
    with pytest.raises(RejectedInputError):
        Dataset(images + 1.5, np.array([0, 1]), 3)
    with pytest.raises(RejectedInputError):
        Dataset(images, np.array([0]), 3)
    with pytest.raises(RejectedInputError):
        Dataset(np.zeros((2, 4)), np.array([0, 1]), 3)


def test_split_holdout_is_disjoint(tiny_data):
    remaining, held = tiny_data.split_holdout(per_label=5, seed=0)
    assert len(held) == 15 and len(remaining) == 45
    assert np.array_equal(held.class_counts(), [5, 5, 5])
    rows = {row.tobytes() for row in held.images}
    assert not any(row.tobytes() in rows for row in remaining.images)


def test_batches_cover_every_example_once(tiny_data):
    seen = np.concatenate([labels for _, labels in tiny_data.batches(16, np.random.default_rng(0))])
    assert len(seen) == len(tiny_data)
    assert np.array_equal(np.sort(seen), np.sort(tiny_data.labels))


# -- CIFAR binary readers ------------------------------------------------------


def _records(labels: list[int], prefix: list[int] | None = None) -> tuple[bytes, np.ndarray]:
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(len(labels), 3072), dtype=np.uint8)
    heads = [[*(prefix or []), label] for label in labels]
    raw = b"".join(bytes(head) + row.tobytes() for head, row in zip(heads, pixels))
    return raw, pixels


def test_cifar10_record_layout(tmp_path):
    raw, pixels = _records([3, 0, 9])
    path = tmp_path / "data_batch_1.bin"
    path.write_bytes(raw)
    data = load_cifar10(path)
    assert np.array_equal(data.labels, [3, 0, 9])
    assert data.image_shape == (3, 32, 32)
    # Channel-major: the first 1024 bytes are the red plane.
    assert_allclose(data.images[1, 0].ravel(), pixels[1, :1024] / 255.0, rtol=1e-6)
    assert_allclose(data.images[2, 2, 31, 31], pixels[2, -1] / 255.0, rtol=1e-6)


def test_cifar100_keeps_fine_label(tmp_path):
    raw, _ = _records([42, 99], prefix=[7])
    path = tmp_path / "train.bin"
    path.write_bytes(raw)
    data = load_cifar100(path)
    assert data.num_classes == 100
    assert np.array_equal(data.labels, [42, 99])


def test_cifar_rejects_bad_length_and_labels(tmp_path):
    raw, _ = _records([1, 2])
    short = tmp_path / "short.bin"
    short.write_bytes(raw[:-5])
    with pytest.raises(DatasetFormatError):
        load_cifar10(short)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(_records([1, 10])[0])
    with pytest.raises(DatasetFormatError):
        load_cifar10(bad)


def test_cifar_directory_layout(tmp_path):
    (tmp_path / "data_batch_1.bin").write_bytes(_records([1, 2])[0])
    (tmp_path / "data_batch_2.bin").write_bytes(_records([3])[0])
    (tmp_path / "test_batch.bin").write_bytes(_records([4, 5])[0])
    train, test = load_cifar_dir(tmp_path)
    assert np.array_equal(train.labels, [1, 2, 3])
    assert test.split == "test" and np.array_equal(test.labels, [4, 5])
    with pytest.raises(DatasetFormatError):
        load_cifar_dir(tmp_path / "missing")


# -- mixup ---------------------------------------------------------------------


def test_mixup_endpoints_are_exact_copies():
    rng = np.random.default_rng(0)
    a, b = rng.random((2, 3)), rng.random((2, 3))
    assert np.array_equal(mixup_pair(a, b, 1.0), a)
    assert np.array_equal(mixup_pair(a, b, 0.0), b)
    assert_allclose(mixup_pair(a, b, 0.25), 0.25 * a + 0.75 * b)


def test_mixup_rejects_bad_inputs():
    with pytest.raises(RejectedInputError):
        mixup_pair(np.zeros(3), np.zeros(4), 0.5)
    with pytest.raises(RejectedInputError):
        mixup_pair(np.zeros(3), np.zeros(3), 1.5)
    with pytest.raises(RejectedInputError):
        sample_mixup_ratio(0.0, np.random.default_rng(0))


def test_mixup_labels_stay_distributions():
    eye = np.eye(4)
    mixed = mixup_labels(eye[[0, 1]], eye[[2, 2]], np.array([0.3, 0.9]))
    assert_allclose(mixed.sum(axis=1), 1.0)
    assert_allclose(mixed[0], [0.3, 0.0, 0.7, 0.0])


@pytest.mark.parametrize("alpha", [0.4, 1.0, 2.0])
def test_mixup_ratio_follows_beta(alpha):
    draws = sample_mixup_ratio(alpha, np.random.default_rng(0), size=2000)
    assert kstest(draws, "beta", args=(alpha, alpha)).pvalue > 1e-3


# -- sample pool ---------------------------------------------------------------


def test_label_distributions():
    ol = LabelDistribution.uniform(4, exclude=2)
    assert np.array_equal(ol.support, [0, 1, 3])
    assert ol.expectation(np.arange(4)) == pytest.approx(4 / 3)
    assert LabelDistribution.dirac(1, 3).sample(np.random.default_rng(0)) == 1
    with pytest.raises(RejectedInputError):
        LabelDistribution(np.array([0.5, 0.2]))


def test_pool_buckets_hold_their_class(tiny_data, pool):
    assert pool.size == 12 and pool.num_classes == 3
    for label, bucket in pool.buckets.items():
        members = {row.tobytes() for row in tiny_data.images[tiny_data.labels == label]}
        assert len(bucket) == 4
        assert all(row.tobytes() in members for row in bucket)


def test_pool_enumeration_weights_sum_to_one(pool):
    weights = [w for w, _, _ in pool.enumerate(LabelDistribution.uniform(3, exclude=0))]
    assert len(weights) == 8
    assert sum(weights) == pytest.approx(1.0)


def test_pool_construction_needs_enough_examples(tiny_data):
    with pytest.raises(PoolConstructionError):
        build_sample_pool(tiny_data, per_label=21, seed=0)


def test_pool_without_bucket_rejects_its_label(tiny_data):
    marginal = LabelDistribution(np.array([0.5, 0.5, 0.0]))
    pool = build_sample_pool(tiny_data, per_label=2, seed=0, marginal=marginal)
    assert sorted(pool.buckets) == [0, 1]
    with pytest.raises(MIConfigurationError):
        sample_from_pool(pool, LabelDistribution.dirac(2, 3), np.random.default_rng(0))


def test_sampling_respects_distribution(pool):
    labels, images = sample_many(pool, LabelDistribution.uniform(3, exclude=1), np.random.default_rng(0), 300)
    assert images.shape == (300, *pool.image_shape)
    assert 1 not in set(labels.tolist())
    assert {0, 2} <= set(labels.tolist())


def test_uniform_marginal_draws_balanced_labels(tiny_data):
    pool = build_sample_pool(tiny_data, per_label=4, seed=3)
    count = 3000
    labels, _ = sample_many(pool, pool.marginal, np.random.default_rng(5), count)
    expected = count / 3
    sigma = np.sqrt(count * (1 / 3) * (2 / 3))
    assert np.all(np.abs(np.bincount(labels, minlength=3) - expected) < 4 * sigma)


def test_empty_pool_bucket_is_a_configuration_error():
    pool = SamplePool(buckets={0: np.zeros((1, 1, 2, 2))}, marginal=LabelDistribution.dirac(0, 2))
    with pytest.raises(MIConfigurationError):
        pool.require(LabelDistribution.uniform(2))


# -- triplets ------------------------------------------------------------------


def test_adversarial_triplet_records_delta():
    x0 = np.full((1, 2, 2), 0.98)
    x_adv = np.clip(x0 + 0.03, 0.0, 1.0)
    triplet = AdversarialTriplet.adversarial(x0, x_adv, 1, epsilon=0.03)
    assert triplet.z == 1 and triplet.has_record
    assert_allclose(triplet.delta, 0.02)


def test_triplet_invariants():
    x = np.zeros((1, 2, 2))
    with pytest.raises(RejectedInputError):
        AdversarialTriplet(x=x, y=0, z=2)
    with pytest.raises(RejectedInputError):
        AdversarialTriplet(x=x, y=0, z=0, delta=x, x0=x)
    with pytest.raises(RejectedInputError):
        AdversarialTriplet.adversarial(x, x + 0.1, 0, epsilon=0.05)
    with pytest.raises(RejectedInputError):
        AdversarialTriplet(x=x + 0.01, y=0, z=1, delta=np.full_like(x, 0.02), x0=x, epsilon=0.05)
    assert not AdversarialTriplet.clean(x, 0).has_record
