from .cifar import load_cifar10, load_cifar100, load_cifar_dir
from .datasets import Dataset
from .mixup import mixup_labels, mixup_pair, sample_mixup_ratio
from .pool import LabelDistribution, SamplePool, build_sample_pool, sample_from_pool, sample_many
from .synthetic import gen_synthetic
from .triplet import AdversarialTriplet

__all__ = [
    "AdversarialTriplet",
    "Dataset",
    "LabelDistribution",
    "SamplePool",
    "build_sample_pool",
    "gen_synthetic",
    "load_cifar10",
    "load_cifar100",
    "load_cifar_dir",
    "mixup_labels",
    "mixup_pair",
    "sample_from_pool",
    "sample_many",
    "sample_mixup_ratio",
]
