"""Experiment drivers: defense evaluation, trade-off sweeps, detection, adaptive curves, oracle tables."""

from __future__ import annotations

import logging

import numpy as np

from ..attacks import adaptive_attack_batch, attack_batch, robust_accuracy
from ..config import AnalysisConfig, AttackConfig, DefenseConfig, MIConfig, MIVariant
from ..data import AdversarialTriplet, Dataset, SamplePool
from ..inference import (
    Defense,
    MIDefense,
    NoiseDefense,
    confidence_score,
    defended_accuracy,
    detect,
    triplet_arrays,
)
from ..nn import Classifier
from ..parallel import parallel_map, spawn_generators
from .bounds import lambda_threshold
from .metrics import auc
from .oracle import ConstantResidual, LinearOracle, NormResidual, OraclePoint, ZeroResidual, oracle_clean_accuracy, oracle_mi_outputs
from .theory import detection_gap

logger = logging.getLogger(__name__)

DEFENSE_HEADER = ["defense", "param", "attack", "mode", "clean_acc", "adv_acc", "count"]
TRADEOFF_HEADER = ["defense", "param", "clean_acc", "adv_acc"]
DETECTION_HEADER = ["index", "z", "y_hat", "score", "confidence"]
ADAPTIVE_HEADER = ["n_a", "bare_pgd_acc", "mi_adv_acc"]


def _param(defense: Defense) -> str:
    return "" if defense.param is None else f"{defense.param:.4f}"


def evaluate_defenses(
    model: Classifier,
    clean: Dataset,
    triplets: list[AdversarialTriplet],
    defenses: list[Defense],
    attack: str,
    mode: str,
    seed: int,
    workers: int | None = None,
) -> list[list]:
    """One row per defense: clean accuracy on ``clean`` and accuracy on the adversarial set."""
    x_adv, _, y_adv = triplet_arrays(triplets)
    rows = []
    for defense in defenses:
        clean_acc = defended_accuracy(model, defense, clean.images, clean.labels, seed, workers)
        adv_acc = defended_accuracy(model, defense, x_adv, y_adv, seed, workers)
        logger.info(f"{defense.name} ({_param(defense) or '-'}): clean={clean_acc:.4f} adversarial={adv_acc:.4f}")
        rows.append([defense.name, _param(defense), attack, mode, f"{clean_acc:.6f}", f"{adv_acc:.6f}", len(triplets)])
    return rows


def sweep_grid(defense: DefenseConfig, analysis: AnalysisConfig, pool: SamplePool, num_classes: int) -> list[Defense]:
    """MI-OL over the λ grid plus the noise baseline over the σ grid."""
    floor = lambda_threshold(num_classes)
    grid: list[Defense] = [
        MIDefense(defense.mi.with_variant(MIVariant.OL, lam), pool, "mi-ol")
        for lam in analysis.lambda_grid
        if lam > floor
    ]
    grid += [NoiseDefense(sigma, defense.noise_executions) for sigma in analysis.noise_grid]
    return grid


def tradeoff_sweep(
    model: Classifier,
    clean: Dataset,
    attack_config: AttackConfig,
    grid: list[Defense],
    seed: int,
    workers: int | None = None,
    triplets: list[AdversarialTriplet] | None = None,
) -> list[list]:
    """(clean accuracy, adversarial accuracy) per grid point under one oblivious attack."""
    triplets = triplets if triplets is not None else attack_batch(model, clean, attack_config, workers)
    x_adv, _, y_adv = triplet_arrays(triplets)
    rows = []
    for defense in grid:
        clean_acc = defended_accuracy(model, defense, clean.images, clean.labels, seed, workers)
        adv_acc = defended_accuracy(model, defense, x_adv, y_adv, seed, workers)
        logger.info(f"Sweep {defense.name}={_param(defense)}: clean={clean_acc:.4f} adversarial={adv_acc:.4f}")
        rows.append([defense.name, _param(defense), f"{clean_acc:.6f}", f"{adv_acc:.6f}"])
    return rows


def detection_experiment(
    model: Classifier,
    triplets: list[AdversarialTriplet],
    mi_config: MIConfig,
    pool: SamplePool,
    seed: int,
    workers: int | None = None,
) -> tuple[list[list], dict]:
    """Score every clean point and its adversarial counterpart with MI-PL and raw confidence."""
    config = mi_config.with_variant(MIVariant.PL, mi_config.lambda_pl)
    x_adv, x_clean, _ = triplet_arrays(triplets)
    indices = [t.index if t.index is not None else i for i, t in enumerate(triplets)]
    inputs = [(idx, 0, x) for idx, x in zip(indices, x_clean)] + [(idx, 1, x) for idx, x in zip(indices, x_adv)]
    rngs = spawn_generators(seed, len(inputs))

    def score(job):
        (index, z, x), rng = job
        result = detect(model, x, config, pool, rng)
        return [index, z, result.y_hat, result.score, confidence_score(model, x), result.flag]

    scored = parallel_map(score, list(zip(inputs, rngs)), workers)
    clean = np.array([row[3] for row in scored if row[1] == 0])
    adv = np.array([row[3] for row in scored if row[1] == 1])
    clean_conf = np.array([row[4] for row in scored if row[1] == 0])
    adv_conf = np.array([row[4] for row in scored if row[1] == 1])
    gap = float(adv.mean() - clean.mean())
    summary = {
        "mi_pl_auc": auc(clean, adv),
        "confidence_auc": auc(clean_conf, adv_conf),
        "detection_gap": gap,
        "written_form": -gap,
        "lambda_pl": config.lam,
        "threshold": config.threshold,
        "flag_rate_clean": float(np.mean([row[5] for row in scored if row[1] == 0])),
        "flag_rate_adversarial": float(np.mean([row[5] for row in scored if row[1] == 1])),
        "clean_count": int(clean.size),
        "adversarial_count": int(adv.size),
    }
    logger.info(f"MI-PL AUC={summary['mi_pl_auc']:.4f} confidence AUC={summary['confidence_auc']:.4f} DG={gap:.4f}")
    rows = [[index, z, y_hat, f"{s:.8f}", f"{c:.8f}"] for index, z, y_hat, s, c, _ in scored]
    return rows, summary


def adaptive_curve(
    model: Classifier,
    data: Dataset,
    mi_config: MIConfig,
    pool: SamplePool,
    attack_config: AttackConfig,
    samples_grid: tuple[int, ...],
    seed: int,
    workers: int | None = None,
) -> list[list]:
    """MI accuracy under adaptive PGD for each N_A, next to the bare model under plain PGD."""
    bare = robust_accuracy(model, attack_batch(model, data, attack_config.model_copy(update={"adaptive": False}), workers))
    defense = MIDefense(mi_config, pool, f"mi-{mi_config.variant.value}")
    rows = []
    for n_a in samples_grid:
        config = attack_config.model_copy(update={"adaptive": True, "adaptive_samples": n_a})
        triplets = adaptive_attack_batch(model, data, mi_config, pool, config, workers)
        x_adv, _, y_adv = triplet_arrays(triplets)
        acc = defended_accuracy(model, defense, x_adv, y_adv, seed, workers)
        logger.info(f"Adaptive N_A={n_a}: MI accuracy={acc:.4f} (bare PGD {bare:.4f})")
        rows.append([n_a, f"{bare:.6f}", f"{acc:.6f}"])
    return rows


# -- oracle tables ---------------------------------------------------------

ORACLE_HEADER = ["classes", "lambda", "residual", "variant", "z", "f_y", "f_y_mixed", "f_yhat", "f_yhat_mixed"]
ORACLE_DG_HEADER = ["classes", "lambda", "residual", "dg_pl", "dg_ol", "written_form"]
ORACLE_ACCURACY_HEADER = ["classes", "lambda", "threshold", "expected_acc", "sampled_acc"]


def residual_library(num_classes: int, y: int = 0, y_hat: int = 1, magnitude: float = 0.3):
    """Zero, constant and norm-proportional residuals pushing mass from y to ŷ."""
    direction = np.zeros(num_classes)
    direction[y], direction[y_hat] = -1.0, 1.0
    return {
        "zero": ZeroResidual(),
        "constant": ConstantResidual(magnitude * direction),
        "norm": NormResidual(direction, norm=magnitude),
    }


def oracle_report(analysis: AnalysisConfig, seed: int) -> tuple[list[list], list[list], list[list]]:
    """Table cells, detection-gap identity and clean accuracy under MI-OL, all on the oracle."""
    cells, gaps, accuracy = [], [], []
    rng = np.random.default_rng(seed)
    for num_classes in analysis.oracle_classes:
        for name, residual in residual_library(num_classes).items():
            oracle = LinearOracle(num_classes, residual)
            for lam in analysis.oracle_lambdas:
                for variant in (MIVariant.PL, MIVariant.OL):
                    for z in (0, 1):
                        c = oracle_mi_outputs(oracle, z, variant, lam)
                        cells.append([num_classes, lam, name, variant.value, z, c.f_y, c.f_y_mixed, c.f_yhat, c.f_yhat_mixed])
                dg = {
                    variant: detection_gap(
                        oracle, [OraclePoint(0, 0)], [OraclePoint(0, 1)], MIConfig(variant=variant, lam=lam)
                    ).gap
                    for variant in (MIVariant.PL, MIVariant.OL)
                }
                gaps.append([num_classes, lam, name, dg[MIVariant.PL], dg[MIVariant.OL], -dg[MIVariant.PL]])
        oracle = LinearOracle(num_classes)
        for lam in analysis.oracle_lambdas:
            expected = oracle_clean_accuracy(oracle, lam, 200, rng)
            sampled = oracle_clean_accuracy(oracle, lam, 200, rng, executions=30)
            accuracy.append([num_classes, lam, lambda_threshold(num_classes), expected, sampled])
    logger.info(f"Oracle tables: {len(cells)} cells, {len(gaps)} detection gaps")
    return cells, gaps, accuracy
