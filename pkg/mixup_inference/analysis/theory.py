"""How MI changes predictions: ΔF, the robustness improving condition, detection gap.

Every operation accepts either a trained :class:`Classifier` or a
:class:`LinearOracle`. On a classifier the residual of a perturbation at a base
point is measured as ``F(base + δ) − F(base)``; expectations over mixing
partners are exhaustive for small pools and Monte-Carlo otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import singledispatch

import numpy as np

from ..config import MIConfig, MIVariant
from ..data import AdversarialTriplet, LabelDistribution, SamplePool, sample_many
from ..errors import EmptyEvaluationError, RejectedInputError
from ..inference import detection_config, label_distribution, mi_expectation
from ..nn import Classifier
from .bounds import RICThresholds, ric_thresholds
from .oracle import LinearOracle, OraclePoint, partner_probs

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 1000
MC_SAMPLES = 200


def _partners(
    pool: SamplePool,
    dist: LabelDistribution,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """``(weights, images)`` covering the pool exhaustively when small enough."""
    pool.require(dist)
    if sum(len(pool.buckets[int(k)]) for k in dist.support) <= EXHAUSTIVE_LIMIT:
        entries = list(pool.enumerate(dist))
        return np.array([w for w, _, _ in entries]), np.stack([x for _, _, x in entries])
    _, images = sample_many(pool, dist, rng, MC_SAMPLES)
    return np.full(MC_SAMPLES, 1.0 / MC_SAMPLES), images


# -- ΔF --------------------------------------------------------------------


@singledispatch
def delta_f(model, x, mi_config: MIConfig, pool: SamplePool | None = None) -> np.ndarray:
    """ΔF(x) = F_MI(x) − F(x), componentwise."""
    raise TypeError(f"unsupported model type {type(model).__name__}")


@delta_f.register
def _(model: Classifier, x: np.ndarray, mi_config: MIConfig, pool: SamplePool | None = None) -> np.ndarray:
    if pool is None:
        raise RejectedInputError("a trained model needs a sample pool")
    bare = model.forward(np.asarray(x)[None]).probs[0]
    if mi_config.lam == 1.0:
        return np.zeros_like(bare)
    return mi_expectation(model, x, mi_config, pool).probs - bare


@delta_f.register
def _(model: LinearOracle, x: OraclePoint, mi_config: MIConfig, pool: SamplePool | None = None) -> np.ndarray:
    y_hat = model.predicted_label(x)
    mixed = model.mixed_expectation(x, partner_probs(model, mi_config.variant, y_hat), mi_config.lam)
    return mixed - model.predict(x)


def _predicted(model, x) -> int:
    if isinstance(model, LinearOracle):
        return model.predicted_label(x)
    return int(model.predict(np.asarray(x)[None])[0])


# -- detection gap ---------------------------------------------------------


@dataclass(frozen=True)
class DetectionGap:
    """``gap`` = mean ΔF_ŷ on adversarial minus mean ΔF_ŷ on clean inputs.

    ``written_form`` is the same quantity with the opposite sign, as it appears
    when the gap is written as clean-minus-adversarial.
    """

    gap: float
    clean_mean: float
    adversarial_mean: float

    @property
    def written_form(self) -> float:
        return -self.gap


def detection_scores(model, inputs, mi_config: MIConfig, pool: SamplePool | None = None) -> np.ndarray:
    config = detection_config(mi_config)
    return np.array([delta_f(model, x, config, pool)[_predicted(model, x)] for x in inputs])


def detection_gap(model, clean, adversarial, mi_config: MIConfig, pool: SamplePool | None = None) -> DetectionGap:
    """Mean detection score on adversarial inputs minus the mean on clean ones."""
    if len(clean) == 0 or len(adversarial) == 0:
        raise RejectedInputError("detection gap needs non-empty clean and adversarial sets")
    clean_mean = float(detection_scores(model, clean, mi_config, pool).mean())
    adv_mean = float(detection_scores(model, adversarial, mi_config, pool).mean())
    return DetectionGap(gap=adv_mean - clean_mean, clean_mean=clean_mean, adversarial_mean=adv_mean)


# -- robustness improving condition ----------------------------------------


@dataclass(frozen=True)
class ComponentGap:
    """E[G_k(δ; x0) − G_k(λδ; x̃0)] split into input transfer and perturbation shrinkage."""

    gap: float
    transfer: float
    shrinkage: float
    stderr: float
    threshold: float
    satisfied: bool


@dataclass(frozen=True)
class RICReport:
    variant: MIVariant
    lam: float
    num_classes: int
    count: int
    thresholds: RICThresholds
    true: ComponentGap
    adversarial: ComponentGap

    @property
    def satisfied(self) -> bool:
        return self.true.satisfied and self.adversarial.satisfied


def _report(variant: MIVariant, lam: float, num_classes: int, per_input: np.ndarray) -> RICReport:
    """``per_input`` has shape (n, 2 components, 3 terms): total, transfer, shrinkage."""
    thresholds = ric_thresholds(variant, lam, num_classes)
    means = per_input.mean(axis=0)
    n = len(per_input)
    stderr = per_input[:, :, 0].std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(2)
    true = ComponentGap(*means[0], float(stderr[0]), thresholds.true, bool(means[0, 0] < thresholds.true))
    adv = ComponentGap(*means[1], float(stderr[1]), thresholds.adversarial, bool(means[1, 0] > thresholds.adversarial))
    return RICReport(variant, lam, num_classes, n, thresholds, true, adv)


def _ric_variant(mi_config: MIConfig) -> MIVariant:
    if mi_config.variant is MIVariant.COMBINED:
        raise RejectedInputError("RIC is checked for the PL or OL variant")
    return mi_config.variant


@singledispatch
def check_ric(model, adversarial, mi_config: MIConfig, pool: SamplePool | None = None, rng: np.random.Generator | None = None) -> RICReport:
    raise TypeError(f"unsupported model type {type(model).__name__}")


@check_ric.register
def _(
    model: LinearOracle,
    adversarial: list,
    mi_config: MIConfig,
    pool: SamplePool | None = None,
    rng: np.random.Generator | None = None,
) -> RICReport:
    variant = _ric_variant(mi_config)
    if not adversarial or any(p.z != 1 for p in adversarial):
        raise RejectedInputError("RIC needs a non-empty set of perturbed inputs")
    lam = mi_config.lam
    rows = []
    for point in adversarial:
        y_hat = model.predicted_label(point)
        at_clean = model.residual_at(1.0)
        # Residuals ignore the base point, so moving to x̃0 changes nothing.
        at_mixed = model.residual_at(1.0)
        shrunk = model.residual_at(lam)
        rows.append(
            [
                [at_clean[k] - shrunk[k], at_clean[k] - at_mixed[k], at_mixed[k] - shrunk[k]]
                for k in (point.y, y_hat)
            ]
        )
    return _report(variant, lam, model.num_classes, np.array(rows))


@check_ric.register
def _(
    model: Classifier,
    adversarial: list,
    mi_config: MIConfig,
    pool: SamplePool | None = None,
    rng: np.random.Generator | None = None,
) -> RICReport:
    variant = _ric_variant(mi_config)
    if pool is None:
        raise RejectedInputError("a trained model needs a sample pool")
    if any(t.z != 1 or not t.has_record for t in adversarial):
        raise RejectedInputError("RIC needs adversarial triplets with recorded delta and x0")
    rng = rng or np.random.default_rng(mi_config.seed)
    lam = mi_config.lam
    rows = []
    for t in adversarial:
        row = _classifier_ric_terms(model, t, variant, lam, pool, rng)
        if row is not None:
            rows.append(row)
    if not rows:
        raise EmptyEvaluationError("no successful adversarial examples to check RIC on")
    return _report(variant, lam, model.num_classes, np.array(rows))


def _classifier_ric_terms(
    model: Classifier,
    t: AdversarialTriplet,
    variant: MIVariant,
    lam: float,
    pool: SamplePool,
    rng: np.random.Generator,
) -> list[list[float]] | None:
    x0, x, delta = t.x0, t.x, t.delta
    bare = model.forward(np.stack([x, x0])).probs
    y_hat = int(np.argmax(bare[0]))
    if y_hat == t.y:
        return None
    weights, partners = _partners(pool, label_distribution(variant, y_hat, model.num_classes), rng)
    base = lam * x0[None] + (1.0 - lam) * partners
    mixed = lam * x[None] + (1.0 - lam) * partners
    f_base = model.forward(base).probs
    # The full perturbation moved onto the mixed base, kept inside the image range.
    f_transferred = model.forward(np.clip(base + delta[None], 0.0, 1.0)).probs
    f_mixed = model.forward(mixed).probs

    g_clean = bare[0] - bare[1]
    g_transferred = weights @ (f_transferred - f_base)
    g_shrunk = weights @ (f_mixed - f_base)
    return [
        [g_clean[k] - g_shrunk[k], g_clean[k] - g_transferred[k], g_transferred[k] - g_shrunk[k]]
        for k in (t.y, y_hat)
    ]


def ric_curves(
    model,
    adversarial: list,
    variant: MIVariant,
    lambdas: tuple[float, ...],
    mi_config: MIConfig,
    pool: SamplePool | None = None,
) -> list[RICReport]:
    """One report per λ; each uses the same seeded partner stream."""
    if any(not 0.0 < lam <= 1.0 for lam in lambdas):
        raise RejectedInputError(f"lambda grid must lie in (0, 1], got {list(lambdas)}")
    reports = []
    for lam in lambdas:
        config = mi_config.model_copy(update={"variant": variant, "lam": lam})
        reports.append(check_ric(model, adversarial, config, pool, np.random.default_rng(mi_config.seed)))
        logger.info(f"RIC {variant.value} lambda={lam:.2f}: satisfied={reports[-1].satisfied}")
    return reports


RIC_HEADER = [
    "lambda",
    "variant",
    "component",
    "gap",
    "display_gap",
    "transfer",
    "shrinkage",
    "stderr",
    "threshold",
    "display_threshold",
    "satisfied",
]


def ric_rows(reports: list[RICReport]) -> list[list]:
    """CSV rows; the true-label component is also given with flipped sign for display."""
    rows = []
    for report in reports:
        for component, part, sign in (("y", report.true, -1.0), ("y_hat", report.adversarial, 1.0)):
            rows.append(
                [
                    f"{report.lam:.4f}",
                    report.variant.value,
                    component,
                    f"{part.gap:.8f}",
                    f"{sign * part.gap:.8f}",
                    f"{part.transfer:.8f}",
                    f"{part.shrinkage:.8f}",
                    f"{part.stderr:.8f}",
                    f"{part.threshold:.8f}",
                    f"{sign * part.threshold:.8f}",
                    int(part.satisfied),
                ]
            )
    return rows
