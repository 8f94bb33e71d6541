"""Mixup Inference and the Gaussian-noise baseline.

MI predicts ŷ = argmax F(x) once, then averages F over N mixtures
λx + (1−λ)x_s whose partners x_s are drawn from the sample pool under a
label distribution chosen by the variant:

- PL: every partner carries the predicted label ŷ.
- OL: partners are drawn uniformly from the labels other than ŷ.
- Combined: MI-PL detection first, MI-OL classification for flagged inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .analysis.bounds import lambda_threshold
from .config import DatasetSource, DefenseConfig, DefenseKind, MIConfig, MIVariant, TrainMethod
from .data import AdversarialTriplet, LabelDistribution, SamplePool
from .errors import EmptyEvaluationError, MIConfigurationError, RejectedInputError
from .nn import Classifier, PredictionVector
from .parallel import parallel_map, spawn_generators

logger = logging.getLogger(__name__)

# Tuned defense hyperparameters per (dataset, training method).
TUNED_DEFAULTS: dict[tuple[DatasetSource, TrainMethod], dict[str, float]] = {
    (DatasetSource.CIFAR10, TrainMethod.MIXUP): {"lambda_ol": 0.5, "noise_sigma": 0.04},
    (DatasetSource.CIFAR10, TrainMethod.INTERPOLATED_AT): {"lambda_ol": 0.6, "noise_sigma": 0.075},
    (DatasetSource.CIFAR10, TrainMethod.ERM): {"lambda_ol": 0.6},
    (DatasetSource.CIFAR10, TrainMethod.AT): {"lambda_ol": 0.8},
    (DatasetSource.CIFAR100, TrainMethod.MIXUP): {"lambda_ol": 0.5, "noise_sigma": 0.025},
    (DatasetSource.CIFAR100, TrainMethod.INTERPOLATED_AT): {"lambda_ol": 0.6, "noise_sigma": 0.06},
}


def tuned_defense_config(config: DefenseConfig, source: DatasetSource, method: str) -> DefenseConfig:
    """Fill values the config leaves unset from :data:`TUNED_DEFAULTS`.

    ``lambda_ol`` goes to the combined policy and, when the MI variant is OL, to
    ``lambda`` as well. Explicitly configured values always win.
    """
    try:
        tuned = TUNED_DEFAULTS.get((source, TrainMethod(method)), {})
    except ValueError:
        tuned = {}
    mi_update: dict[str, float] = {}
    update: dict = {}
    if "lambda_ol" in tuned:
        if "lambda_ol" not in config.mi.model_fields_set:
            mi_update["lambda_ol"] = tuned["lambda_ol"]
        if config.mi.variant is MIVariant.OL and "lam" not in config.mi.model_fields_set:
            mi_update["lam"] = tuned["lambda_ol"]
    if "noise_sigma" in tuned and "noise_sigma" not in config.model_fields_set:
        update["noise_sigma"] = tuned["noise_sigma"]
    if mi_update:
        update["mi"] = config.mi.model_copy(update=mi_update)
    if not update:
        return config
    logger.info(f"Tuned defaults for {source.value}/{method}: {mi_update | {k: v for k, v in update.items() if k != 'mi'}}")
    return config.model_copy(update=update)


def label_dist_pl(y_hat: int, num_classes: int) -> LabelDistribution:
    """All partner mass on the predicted label."""
    return LabelDistribution.dirac(y_hat, num_classes)


def label_dist_ol(y_hat: int, num_classes: int) -> LabelDistribution:
    """Uniform over every label except the predicted one."""
    if num_classes < 2:
        raise RejectedInputError(f"OL needs at least 2 classes, got {num_classes}")
    return LabelDistribution.uniform(num_classes, exclude=y_hat)


def label_distribution(variant: MIVariant, y_hat: int, num_classes: int) -> LabelDistribution:
    if variant is MIVariant.PL:
        return label_dist_pl(y_hat, num_classes)
    if variant is MIVariant.OL:
        return label_dist_ol(y_hat, num_classes)
    raise RejectedInputError("the combined policy has no single partner-label distribution")


def check_classification(config: MIConfig, num_classes: int) -> None:
    """MI-OL must keep λ above 1/L to classify clean inputs correctly."""
    if config.variant is MIVariant.OL and config.lam <= lambda_threshold(num_classes):
        raise MIConfigurationError(
            f"MI-OL needs lambda > 1/L = {lambda_threshold(num_classes):.4g}, got {config.lam}"
        )


def _bare(model: Classifier, x: np.ndarray) -> PredictionVector:
    return model.forward(np.asarray(x)[None])[0]


def _mixture_average(
    model: Classifier,
    x: np.ndarray,
    dist: LabelDistribution,
    config: MIConfig,
    pool: SamplePool,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mean of F over ``config.executions`` mixtures, one spawned stream per execution."""
    pool.require(dist)
    mixes = []
    for stream in rng.spawn(config.executions):
        y_s = dist.sample(stream)
        bucket = pool.buckets[y_s]
        x_s = bucket[stream.integers(len(bucket))]
        lam = config.lam if config.lambda_range is None else stream.uniform(*config.lambda_range)
        mixes.append(lam * x + (1.0 - lam) * x_s)
    return model.forward(np.stack(mixes)).probs.mean(axis=0)


def mi_predict(
    model: Classifier,
    x: np.ndarray,
    config: MIConfig,
    pool: SamplePool,
    rng: np.random.Generator,
) -> PredictionVector:
    """Monte-Carlo MI output F_MI(x) for one input."""
    if config.variant is MIVariant.COMBINED:
        return mi_combined(model, x, config, pool, rng)
    check_classification(config, model.num_classes)
    bare = _bare(model, x)
    if config.lam == 1.0 and config.lambda_range is None:
        return bare
    dist = label_distribution(config.variant, bare.label, model.num_classes)
    return PredictionVector.from_probs(_mixture_average(model, x, dist, config, pool, rng))


def mi_expectation(model: Classifier, x: np.ndarray, config: MIConfig, pool: SamplePool, chunk: int = 256) -> PredictionVector:
    """Exact expectation of F over every pool entry under the variant's distribution."""
    if config.lambda_range is not None:
        raise MIConfigurationError("the exhaustive expectation needs a fixed lambda")
    bare = _bare(model, x)
    dist = label_distribution(config.variant, bare.label, model.num_classes)
    entries = list(pool.enumerate(dist))
    weights = np.array([w for w, _, _ in entries])
    probs = np.zeros(model.num_classes)
    for start in range(0, len(entries), chunk):
        block = entries[start : start + chunk]
        mixes = np.stack([config.lam * x + (1.0 - config.lam) * x_s for _, _, x_s in block])
        probs += weights[start : start + chunk] @ model.forward(mixes).probs
    return PredictionVector.from_probs(probs)


@dataclass(frozen=True)
class DetectionScore:
    """ΔF_ŷ = F_MI,ŷ(x) − F_ŷ(x); lower means more likely adversarial."""

    score: float
    y_hat: int
    flag: bool


def detection_config(config: MIConfig) -> MIConfig:
    """The combined policy detects with MI-PL at ``lambda_pl``."""
    if config.variant is MIVariant.COMBINED:
        return config.with_variant(MIVariant.PL, config.lambda_pl)
    return config


def detect(
    model: Classifier,
    x: np.ndarray,
    config: MIConfig,
    pool: SamplePool,
    rng: np.random.Generator,
) -> DetectionScore:
    """Signed shift of the predicted-label probability under MI; flagged below the threshold."""
    config = detection_config(config)
    bare = _bare(model, x)
    y_hat = bare.label
    if config.lam == 1.0 and config.lambda_range is None:
        score = 0.0
    else:
        dist = label_distribution(config.variant, y_hat, model.num_classes)
        mixed = _mixture_average(model, x, dist, config, pool, rng)
        score = float(mixed[y_hat] - bare.probs[y_hat])
    return DetectionScore(score=score, y_hat=y_hat, flag=score < config.threshold)


def mi_combined(
    model: Classifier,
    x: np.ndarray,
    config: MIConfig,
    pool: SamplePool,
    rng: np.random.Generator,
) -> PredictionVector:
    """MI-OL at ``lambda_ol`` for inputs MI-PL flags; the bare prediction otherwise."""
    detect_rng, classify_rng = rng.spawn(2)
    if not detect(model, x, config.with_variant(MIVariant.PL, config.lambda_pl), pool, detect_rng).flag:
        return _bare(model, x)
    return mi_predict(model, x, config.with_variant(MIVariant.OL, config.lambda_ol), pool, classify_rng)


def gaussian_noise_defense(
    model: Classifier,
    x: np.ndarray,
    sigma: float,
    executions: int,
    rng: np.random.Generator,
) -> PredictionVector:
    """Mean of F(clip(x + η)) over ``executions`` draws of η ~ N(0, σ²I)."""
    if sigma < 0:
        raise RejectedInputError(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return _bare(model, x)
    noisy = np.clip(x[None] + sigma * rng.standard_normal((executions, *np.shape(x))), 0.0, 1.0)
    return PredictionVector.from_probs(model.forward(noisy).probs.mean(axis=0))


def confidence_score(model: Classifier, x: np.ndarray) -> float:
    """Raw max-probability baseline detector, on the same lower-is-adversarial scale."""
    return float(_bare(model, x).probs.max())


# -- defenses as evaluable policies ---------------------------------------


class Defense(Protocol):
    name: str
    param: float | None

    def predict(self, model: Classifier, x: np.ndarray, rng: np.random.Generator) -> PredictionVector: ...


@dataclass(frozen=True)
class NoDefense:
    name: str = DefenseKind.NONE.value
    param: float | None = None

    def predict(self, model: Classifier, x: np.ndarray, rng: np.random.Generator) -> PredictionVector:
        return _bare(model, x)


@dataclass(frozen=True)
class MIDefense:
    config: MIConfig
    pool: SamplePool = field(repr=False)
    name: str = DefenseKind.MI_OL.value

    @property
    def param(self) -> float:
        return self.config.lambda_ol if self.config.variant is MIVariant.COMBINED else self.config.lam

    def predict(self, model: Classifier, x: np.ndarray, rng: np.random.Generator) -> PredictionVector:
        return mi_predict(model, x, self.config, self.pool, rng)


@dataclass(frozen=True)
class NoiseDefense:
    sigma: float
    executions: int = 30
    name: str = DefenseKind.NOISE.value

    @property
    def param(self) -> float:
        return self.sigma

    def predict(self, model: Classifier, x: np.ndarray, rng: np.random.Generator) -> PredictionVector:
        return gaussian_noise_defense(model, x, self.sigma, self.executions, rng)


def build_defense(kind: DefenseKind, config: DefenseConfig, pool: SamplePool | None) -> Defense:
    """Instantiate one evaluated defense; every MI kind needs ``pool``."""
    if kind is DefenseKind.NONE:
        return NoDefense()
    if kind is DefenseKind.NOISE:
        return NoiseDefense(config.noise_sigma, config.noise_executions)
    if pool is None:
        raise MIConfigurationError(f"defense '{kind.value}' needs a sample pool")
    if kind is DefenseKind.MI_PL:
        return MIDefense(config.mi.with_variant(MIVariant.PL), pool, kind.value)
    if kind is DefenseKind.MI_OL:
        lam = config.mi.lambda_ol if config.mi.variant is MIVariant.COMBINED else config.mi.lam
        return MIDefense(config.mi.with_variant(MIVariant.OL, lam), pool, kind.value)
    return MIDefense(config.mi.with_variant(MIVariant.COMBINED), pool, kind.value)


def defended_accuracy(
    model: Classifier,
    defense: Defense,
    inputs: np.ndarray,
    labels: np.ndarray,
    seed: int,
    workers: int | None = None,
) -> float:
    """Fraction of ``inputs`` the defended model labels correctly; one stream per input."""
    if len(inputs) == 0:
        raise EmptyEvaluationError(f"nothing to evaluate under defense '{defense.name}'")
    rngs = spawn_generators(seed, len(inputs))
    preds = parallel_map(lambda job: defense.predict(model, job[0], job[1]).label, list(zip(inputs, rngs)), workers)
    return float(np.mean(np.array(preds) == np.asarray(labels)))


def triplet_arrays(triplets: list[AdversarialTriplet]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked ``(x, x0, y)`` of a triplet list."""
    if not triplets:
        raise EmptyEvaluationError("empty adversarial set")
    return (
        np.stack([t.x for t in triplets]),
        np.stack([t.x0 if t.x0 is not None else t.x for t in triplets]),
        np.array([t.y for t in triplets]),
    )
