"""Subcommand bodies: each reads artifacts, runs one stage and writes its outputs under ``out``."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis.experiments import (
    ADAPTIVE_HEADER,
    DEFENSE_HEADER,
    DETECTION_HEADER,
    ORACLE_ACCURACY_HEADER,
    ORACLE_DG_HEADER,
    ORACLE_HEADER,
    TRADEOFF_HEADER,
    adaptive_curve,
    detection_experiment,
    evaluate_defenses,
    oracle_report,
    sweep_grid,
    tradeoff_sweep,
)
from .analysis.metrics import linearity_profile
from .analysis.theory import RIC_HEADER, ric_curves, ric_rows
from .artifacts import load_triplets, save_triplets, write_csv, write_json
from .attacks import adaptive_attack_batch, attack_batch, robust_accuracy
from .config import DatasetSource, ExperimentConfig, MIVariant
from .data import AdversarialTriplet, Dataset, SamplePool, build_sample_pool, gen_synthetic, load_cifar10, load_cifar100, load_cifar_dir
from .errors import RejectedInputError
from .inference import build_defense, tuned_defense_config
from .nn import Architecture, Classifier, load_checkpoint, save_checkpoint
from .training import evaluate, train, write_trace

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ckpt"
ADVERSARIAL_NAME = "adversarial.bin"


@dataclass(frozen=True)
class Workbench:
    """Training split, held-out pool and evaluation slice derived from one config."""

    train: Dataset
    pool: SamplePool
    eval: Dataset


def _load_source(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    ds = config.dataset
    if ds.source is DatasetSource.SYNTHETIC:
        syn = ds.synthetic
        train_set = gen_synthetic(syn.n_train, syn.num_classes, config.seed, syn.image_shape, syn.noise)
        test_set = gen_synthetic(
            syn.n_test, syn.num_classes, config.seed + 1, syn.image_shape, syn.noise, "test", prototype_seed=config.seed
        )
        return train_set, test_set
    fine = ds.source is DatasetSource.CIFAR100
    if ds.path.is_dir():
        return load_cifar_dir(ds.path, fine=fine)
    if ds.test_path is None:
        raise RejectedInputError("dataset.test_path is required when dataset.path is a single file")
    loader = load_cifar100 if fine else load_cifar10
    return loader(ds.path, "train"), loader(ds.test_path, "test")


def prepare_data(config: ExperimentConfig) -> Workbench:
    """Load the configured source and split off the MI sample pool and the eval slice."""
    train_set, test_set = _load_source(config)
    rng = np.random.default_rng(config.seed)
    if config.dataset.train_size is not None and config.dataset.train_size < len(train_set):
        train_set = train_set.subset(np.sort(rng.permutation(len(train_set))[: config.dataset.train_size]))
    remaining, held_out = train_set.split_holdout(config.dataset.pool_per_label, config.seed)
    pool = build_sample_pool(held_out, config.dataset.pool_per_label, config.seed)
    eval_size = min(config.dataset.eval_size, len(test_set))
    eval_set = test_set.subset(np.sort(rng.permutation(len(test_set))[:eval_size]))
    logger.info(f"Data: {len(remaining)} train, {pool.size} pool, {len(eval_set)} eval ({test_set.num_classes} classes)")
    return Workbench(train=remaining, pool=pool, eval=eval_set)


def attacked_slice(config: ExperimentConfig, bench: Workbench) -> Dataset:
    """The eval examples every attack and defense step works on."""
    return bench.eval.head(config.attack.samples)


def load_model(path: Path, bench: Workbench) -> Classifier:
    """Load a checkpoint and check it fits the prepared data."""
    model = load_checkpoint(path)
    if model.input_shape != bench.eval.image_shape or model.num_classes != bench.eval.num_classes:
        raise RejectedInputError(
            f"checkpoint {path} was built for {model.architecture.describe()}, "
            f"dataset has shape {bench.eval.image_shape} and {bench.eval.num_classes} classes"
        )
    logger.info(f"Loaded {model.provenance.method} model ({model.num_parameters} parameters) from {path}")
    return model


def write_config(out: Path, config: ExperimentConfig) -> Path:
    return write_json(out / "config.json", config.model_dump(mode="json", by_alias=True))


def _banner(title: str) -> None:
    logger.info("=" * 50)
    logger.info(title)
    logger.info("=" * 50)


def run_train(config: ExperimentConfig, out: Path) -> Path:
    _banner(f"Train: {config.train.method.value} (seed {config.seed})")
    bench = prepare_data(config)
    architecture = Architecture.from_config(config.model, bench.train.image_shape, bench.train.num_classes)
    result = train(bench.train, config.train, architecture, eval_data=bench.eval)
    path = save_checkpoint(result.model, out / CHECKPOINT_NAME)
    write_trace(out / "trace.csv", result.trace)
    write_config(out, config)
    _, clean_acc = evaluate(result.model, bench.eval)
    logger.info(f"Checkpoint: {path}")
    print(f"method={config.train.method.value} clean_accuracy={clean_acc:.4f}")
    return path


def _attack_name(config: ExperimentConfig) -> str:
    return f"pgd{config.attack.steps}" + ("-adaptive" if config.attack.adaptive else "")


def run_attack(config: ExperimentConfig, checkpoint: Path, out: Path) -> Path:
    _banner(f"Attack: {_attack_name(config)} {config.attack.mode.value} eps={config.attack.epsilon:.4f}")
    bench = prepare_data(config)
    model = load_model(checkpoint, bench)
    data = attacked_slice(config, bench)
    if config.attack.adaptive:
        mi = tuned_defense_config(config.defense, config.dataset.source, model.provenance.method).mi
        triplets = adaptive_attack_batch(model, data, mi, bench.pool, config.attack)
    else:
        triplets = attack_batch(model, data, config.attack)
    path = save_triplets(out / ADVERSARIAL_NAME, triplets)
    write_config(out, config)
    accuracy = robust_accuracy(model, triplets)
    print(f"attack={_attack_name(config)} mode={config.attack.mode.value} count={len(triplets)} robust_accuracy={accuracy:.4f}")
    return path


def _triplets(config: ExperimentConfig, bench: Workbench, adversarial: Path) -> tuple[Dataset, list[AdversarialTriplet]]:
    data = attacked_slice(config, bench)
    return data, load_triplets(adversarial, data)


def run_defend(config: ExperimentConfig, checkpoint: Path, adversarial: Path, out: Path) -> Path:
    """Score every configured defense on clean and adversarial inputs; writes defense.csv."""
    _banner(f"Defend: {', '.join(kind.value for kind in config.defense.evaluate)}")
    bench = prepare_data(config)
    model = load_model(checkpoint, bench)
    data, triplets = _triplets(config, bench, adversarial)
    defense = tuned_defense_config(config.defense, config.dataset.source, model.provenance.method)
    defenses = [build_defense(kind, defense, bench.pool) for kind in defense.evaluate]
    rows = evaluate_defenses(
        model, data, triplets, defenses, _attack_name(config), config.attack.mode.value, config.defense.mi.seed
    )
    write_config(out, config)
    return write_csv(out / "defense.csv", DEFENSE_HEADER, rows)


def run_detect(config: ExperimentConfig, checkpoint: Path, adversarial: Path, out: Path) -> tuple[Path, Path]:
    """MI-PL detection scores per triplet plus the AUC summary."""
    _banner(f"Detect: MI-PL lambda={config.defense.mi.lambda_pl}")
    bench = prepare_data(config)
    model = load_model(checkpoint, bench)
    _, triplets = _triplets(config, bench, adversarial)
    triplets = triplets[: config.analysis.detection_samples]
    rows, summary = detection_experiment(model, triplets, config.defense.mi, bench.pool, config.defense.mi.seed)
    write_config(out, config)
    return write_csv(out / "detection.csv", DETECTION_HEADER, rows), write_json(out / "auc.json", summary)


SWEEP_KINDS = ("tradeoff", "ric", "adaptive", "linearity")


def run_sweep(
    config: ExperimentConfig,
    checkpoint: Path,
    out: Path,
    kind: str = "tradeoff",
    adversarial: Path | None = None,
) -> Path:
    if kind not in SWEEP_KINDS:
        raise RejectedInputError(f"unknown sweep kind {kind!r}; choose from {', '.join(SWEEP_KINDS)}")
    _banner(f"Sweep: {kind}")
    bench = prepare_data(config)
    model = load_model(checkpoint, bench)
    data = bench.eval.head(config.analysis.sweep_samples)
    write_config(out, config)

    def triplets_for(slice_: Dataset) -> list[AdversarialTriplet]:
        if adversarial is not None:
            return _triplets(config, bench, adversarial)[1]
        return attack_batch(model, slice_, config.attack)

    if kind == "tradeoff":
        triplets = triplets_for(data)
        clean = data if adversarial is None else attacked_slice(config, bench)
        grid = sweep_grid(config.defense, config.analysis, bench.pool, model.num_classes)
        rows = tradeoff_sweep(model, clean, config.attack, grid, config.defense.mi.seed, triplets=triplets)
        return write_csv(out / "tradeoff.csv", TRADEOFF_HEADER, rows)

    if kind == "ric":
        triplets = triplets_for(data)[: config.analysis.ric_samples]
        reports = []
        for variant in (MIVariant.PL, MIVariant.OL):
            reports += ric_curves(model, triplets, variant, config.analysis.ric_lambda_grid, config.defense.mi, bench.pool)
        return write_csv(out / "ric_curves.csv", RIC_HEADER, ric_rows(reports))

    if kind == "adaptive":
        mi = tuned_defense_config(config.defense, config.dataset.source, model.provenance.method).mi
        if mi.variant is MIVariant.COMBINED:
            mi = mi.with_variant(MIVariant.OL, mi.lambda_ol)
        rows = adaptive_curve(
            model, data, mi, bench.pool, config.attack, config.analysis.adaptive_samples, mi.seed
        )
        return write_csv(out / "adaptive.csv", ADAPTIVE_HEADER, rows)

    lambdas = tuple(np.round(np.linspace(0.0, 1.0, 11), 2))
    score = linearity_profile(
        model, bench.eval, config.analysis.linearity_segments, lambdas, np.random.default_rng(config.seed)
    )
    logger.info(f"Linearity profile: {score:.6f}")
    return write_json(
        out / "linearity.json",
        {"method": model.provenance.method, "segments": config.analysis.linearity_segments, "score": score},
    )


def run_oracle(config: ExperimentConfig, out: Path) -> list[Path]:
    _banner("Oracle: linear-model theory tables")
    cells, gaps, accuracy = oracle_report(config.analysis, config.seed)
    write_config(out, config)
    return [
        write_csv(out / "oracle_table.csv", ORACLE_HEADER, cells),
        write_csv(out / "oracle_dg.csv", ORACLE_DG_HEADER, gaps),
        write_csv(out / "oracle_accuracy.csv", ORACLE_ACCURACY_HEADER, accuracy),
    ]
