"""L-infinity PGD: oblivious attacks on the bare classifier and adaptive attacks on MI."""

from __future__ import annotations

import logging

import numpy as np

from .config import AdaptiveMode, AttackConfig, AttackMode, MIConfig, MIVariant
from .data import AdversarialTriplet, Dataset, SamplePool, sample_many
from .errors import EmptyEvaluationError, RejectedInputError
from .inference import label_distribution
from .nn import Classifier, Tensor
from .parallel import parallel_map, spawn_generators

logger = logging.getLogger(__name__)

CHUNK = 32


class FixedMixup:
    """Input transform ``x -> λx + (1−λ)·partners`` with constant partners."""

    def __init__(self, lam: float, partners: np.ndarray):
        self.lam = lam
        self.partners = np.asarray(partners)

    def __call__(self, x: Tensor) -> Tensor:
        return x * self.lam + Tensor((1.0 - self.lam) * self.partners.astype(x.dtype))


def project(x: np.ndarray, x0: np.ndarray, epsilon: float) -> np.ndarray:
    """Clip onto the ε-ball around ``x0`` intersected with [0, 1]."""
    return np.clip(np.clip(x, x0 - epsilon, x0 + epsilon), 0.0, 1.0).astype(x0.dtype, copy=False)


def _step(x: np.ndarray, grad: np.ndarray, step_size: float, targeted: bool) -> np.ndarray:
    direction = np.sign(grad)
    return x - step_size * direction if targeted else x + step_size * direction


def _init(x0: np.ndarray, epsilon: float, rng: np.random.Generator, random_init: bool) -> np.ndarray:
    if not random_init:
        return x0.copy()
    return project(x0 + rng.uniform(-epsilon, epsilon, size=x0.shape), x0, epsilon)


def _objective(probs: np.ndarray, labels: np.ndarray, targeted: bool) -> np.ndarray:
    """Per-example attack objective; larger is stronger."""
    picked = np.maximum(probs[np.arange(len(labels)), labels], np.finfo(np.float64).tiny)
    ce = -np.log(picked)
    return -ce if targeted else ce


def pgd_batch(
    model: Classifier,
    x0: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
    step_size: float,
    steps: int,
    rng: np.random.Generator,
    targets: np.ndarray | None = None,
    restarts: int = 1,
    random_init: bool = True,
    transform: FixedMixup | None = None,
) -> np.ndarray:
    """Vectorized PGD over a batch; returns the adversarial inputs.

    Untargeted mode ascends cross-entropy w.r.t. ``labels``; with ``targets`` it
    descends cross-entropy w.r.t. the targets instead. Across restarts each row
    keeps the iterate with the strongest objective.
    """
    x0 = np.asarray(x0, dtype=model.dtype)
    labels = np.asarray(labels, dtype=np.int64)
    targeted = targets is not None
    aim = np.asarray(targets, dtype=np.int64) if targeted else labels
    if targeted and np.any(aim == labels):
        raise RejectedInputError("targeted attack needs target != true label for every input")

    best = x0.copy()
    best_obj = np.full(len(x0), -np.inf)
    for _ in range(restarts):
        x = _init(x0, epsilon, rng, random_init)
        for _ in range(steps):
            _, grad = model.input_gradient(x, aim, transform)
            x = project(_step(x, grad, step_size, targeted), x0, epsilon)
        fed = x if transform is None else x * transform.lam + (1.0 - transform.lam) * transform.partners
        obj = _objective(model.forward(fed).probs, aim, targeted)
        better = obj > best_obj
        best[better], best_obj[better] = x[better], obj[better]
    return best


def _target_for(config: AttackConfig, y: int, num_classes: int) -> int | None:
    if config.mode is not AttackMode.TARGETED:
        return None
    return config.target if config.target is not None else (y + 1) % num_classes


def pgd(model: Classifier, x0: np.ndarray, y: int, config: AttackConfig, rng: np.random.Generator) -> AdversarialTriplet:
    """Attack one clean input; the triplet records δ = x_adv − x0."""
    x0 = np.asarray(x0, dtype=model.dtype)
    target = _target_for(config, y, model.num_classes)
    if target is not None and target == y:
        raise RejectedInputError(f"target label {target} equals the true label")
    x_adv = pgd_batch(
        model,
        x0[None],
        np.array([y]),
        config.epsilon,
        config.step_size,
        config.steps,
        rng,
        targets=None if target is None else np.array([target]),
        restarts=config.restarts,
    )[0]
    return AdversarialTriplet.adversarial(x0, x_adv, y, config.epsilon)


def correctly_classified(model: Classifier, data: Dataset, batch_size: int = 256) -> np.ndarray:
    """Indices of inputs the bare model gets right."""
    preds = np.concatenate(
        [model.predict(data.images[i : i + batch_size]) for i in range(0, len(data), batch_size)]
    ) if len(data) else np.empty(0, dtype=np.int64)
    return np.flatnonzero(preds == data.labels)


def attack_batch(
    model: Classifier,
    data: Dataset,
    config: AttackConfig,
    workers: int | None = None,
) -> list[AdversarialTriplet]:
    """Attack every correctly classified input of ``data``; one triplet each.

    Work is split into fixed-size chunks with one spawned stream per chunk, so
    results do not depend on the worker count.
    """
    keep = correctly_classified(model, data)
    if config.mode is AttackMode.TARGETED and config.target is not None:
        keep = keep[data.labels[keep] != config.target]
    if len(keep) == 0:
        raise EmptyEvaluationError("no correctly classified inputs left to attack")
    logger.info(f"Attacking {len(keep)}/{len(data)} correctly classified inputs")

    chunks = [keep[i : i + CHUNK] for i in range(0, len(keep), CHUNK)]
    rngs = spawn_generators(config.seed, len(chunks))

    def run(job: tuple[np.ndarray, np.random.Generator]) -> np.ndarray:
        idx, rng = job
        labels = data.labels[idx]
        targets = None
        if config.mode is AttackMode.TARGETED:
            targets = np.array([_target_for(config, int(y), data.num_classes) for y in labels])
        return pgd_batch(
            model,
            data.images[idx],
            labels,
            config.epsilon,
            config.step_size,
            config.steps,
            rng,
            targets=targets,
            restarts=config.restarts,
        )

    adversarial = parallel_map(run, list(zip(chunks, rngs)), workers)
    triplets = [
        AdversarialTriplet.adversarial(
            data.images[i].astype(model.dtype), x_adv, int(data.labels[i]), config.epsilon, index=int(i)
        )
        for idx, batch in zip(chunks, adversarial)
        for i, x_adv in zip(idx, batch)
    ]
    logger.info(f"Robust accuracy of the bare model: {robust_accuracy(model, triplets):.4f}")
    return triplets


def robust_accuracy(model: Classifier, triplets: list[AdversarialTriplet]) -> float:
    """Accuracy of the bare model on the adversarial inputs."""
    if not triplets:
        raise EmptyEvaluationError("no triplets to score")
    x = np.stack([t.x for t in triplets])
    y = np.array([t.y for t in triplets])
    return float(np.mean(model.predict(x) == y))


def _classification_config(mi_config: MIConfig) -> MIConfig:
    # The combined policy classifies flagged inputs with OL, which is the path worth attacking.
    if mi_config.variant is MIVariant.COMBINED:
        return mi_config.with_variant(MIVariant.OL, mi_config.lambda_ol)
    return mi_config


def adaptive_pgd(
    model: Classifier,
    mi_config: MIConfig,
    pool: SamplePool,
    x0: np.ndarray,
    y: int,
    config: AttackConfig,
    rng: np.random.Generator,
) -> AdversarialTriplet:
    """White-box PGD against MI's expectation over mixing partners.

    Each step re-predicts ŷ on the current iterate, draws ``adaptive_samples`` fresh
    partners from the variant's label distribution, and either signs the summed
    input gradients (``gradient_sum``) or averages the per-partner projected steps
    (``perturbation_average``).
    """
    mi = _classification_config(mi_config)
    lam = mi.lam
    samples = config.adaptive_samples
    x0 = np.asarray(x0, dtype=model.dtype)
    target = _target_for(config, y, model.num_classes)
    if target is not None and target == y:
        raise RejectedInputError(f"target label {target} equals the true label")
    targeted = target is not None
    aim = np.full(samples, target if targeted else y, dtype=np.int64)
    # Spawning leaves the parent stream untouched, so init draws match plain PGD.
    (sampler,) = rng.spawn(1)

    def draw(x: np.ndarray) -> np.ndarray:
        y_hat = int(model.predict(x[None])[0])
        _, partners = sample_many(pool, label_distribution(mi.variant, y_hat, model.num_classes), sampler, samples)
        return partners

    best, best_obj = x0.copy(), -np.inf
    for _ in range(config.restarts):
        x = _init(x0[None], config.epsilon, rng, True)[0]
        for _ in range(config.steps):
            mix = FixedMixup(lam, draw(x))
            batch = np.broadcast_to(x, (samples, *x.shape))
            _, grads = model.input_gradient(batch, aim, mix)
            if config.adaptive_mode is AdaptiveMode.GRADIENT_SUM:
                x = project(_step(x, grads.sum(axis=0), config.step_size, targeted), x0, config.epsilon)
            else:
                moved = project(_step(batch, grads, config.step_size, targeted), x0[None], config.epsilon)
                x = project(moved.mean(axis=0), x0, config.epsilon)
        partners = draw(x)
        probs = model.forward(lam * x[None] + (1.0 - lam) * partners).probs.mean(axis=0)
        obj = float(_objective(probs[None], aim[:1], targeted)[0])
        if obj > best_obj:
            best, best_obj = x, obj
    return AdversarialTriplet.adversarial(x0, best, y, config.epsilon)


def adaptive_attack_batch(
    model: Classifier,
    data: Dataset,
    mi_config: MIConfig,
    pool: SamplePool,
    config: AttackConfig,
    workers: int | None = None,
) -> list[AdversarialTriplet]:
    """:func:`adaptive_pgd` on every correctly classified input, one stream per input."""
    keep = correctly_classified(model, data)
    if config.mode is AttackMode.TARGETED and config.target is not None:
        keep = keep[data.labels[keep] != config.target]
    if len(keep) == 0:
        raise EmptyEvaluationError("no correctly classified inputs left to attack")
    rngs = spawn_generators(config.seed, len(keep))
    logger.info(f"Adaptive attack (N_A={config.adaptive_samples}) on {len(keep)} inputs")

    def run(job: tuple[int, np.random.Generator]) -> AdversarialTriplet:
        i, rng = job
        triplet = adaptive_pgd(model, mi_config, pool, data.images[i], int(data.labels[i]), config, rng)
        return AdversarialTriplet.adversarial(triplet.x0, triplet.x, triplet.y, config.epsilon, index=int(i))

    return parallel_map(run, list(zip(keep.tolist(), rngs)), workers)
