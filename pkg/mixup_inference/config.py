"""Runtime settings and experiment configuration."""

from __future__ import annotations

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - Python 3.10 fallback
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings

from .errors import RejectedInputError

SCHEMA_VERSION = 1


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    # Parallelism
    workers: int = Field(default=1, ge=1)

    # Paths
    runs_dir: Path = Path("runs")

    # Logging
    log_level: str = "INFO"

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "env_prefix": "MIXUP_INFERENCE_",
        "extra": "ignore",
    }


settings = Settings()


class DatasetSource(str, Enum):
    SYNTHETIC = "synthetic"
    CIFAR10 = "cifar10"
    CIFAR100 = "cifar100"


class ArchitectureKind(str, Enum):
    CNN = "cnn"
    MLP = "mlp"
    LINEAR = "linear"


class TrainMethod(str, Enum):
    """Training procedure tag, also stored in checkpoints."""

    ERM = "erm"
    MIXUP = "mixup"
    AT = "at"
    INTERPOLATED_AT = "interpolated_at"


class AttackMode(str, Enum):
    UNTARGETED = "untargeted"
    TARGETED = "targeted"


class AdaptiveMode(str, Enum):
    """How an adaptive attack combines the N_A per-sample directions."""

    GRADIENT_SUM = "gradient_sum"
    PERTURBATION_AVERAGE = "perturbation_average"


class MIVariant(str, Enum):
    PL = "pl"
    OL = "ol"
    COMBINED = "combined"


class DefenseKind(str, Enum):
    NONE = "none"
    MI_PL = "mi-pl"
    MI_OL = "mi-ol"
    MI_COMBINED = "mi-combined"
    NOISE = "noise"


# Initial learning rates used for each method before rescaling.
DEFAULT_LEARNING_RATES = {
    TrainMethod.ERM: 0.01,
    TrainMethod.MIXUP: 0.01,
    TrainMethod.AT: 0.01,
    TrainMethod.INTERPOLATED_AT: 0.1,
}


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class SyntheticConfig(Section):
    n_train: int = Field(default=2000, ge=1)
    n_test: int = Field(default=500, ge=1)
    num_classes: int = Field(default=10, ge=2)
    image_shape: tuple[int, int, int] = (3, 16, 16)
    noise: float = Field(default=0.08, ge=0.0)


class DatasetConfig(Section):
    source: DatasetSource = DatasetSource.SYNTHETIC
    path: Path | None = None
    test_path: Path | None = None
    train_size: int | None = Field(default=5000, ge=1)
    eval_size: int = Field(default=500, ge=1)
    pool_per_label: int = Field(default=100, ge=1)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)

    @model_validator(mode="after")
    def _require_path(self) -> DatasetConfig:
        if self.source is not DatasetSource.SYNTHETIC and self.path is None:
            raise ValueError(f"dataset.path is required when dataset.source is '{self.source.value}'")
        return self


class ModelConfig(Section):
    kind: ArchitectureKind = ArchitectureKind.CNN
    conv_channels: tuple[int, ...] = (16, 32)
    hidden: tuple[int, ...] = (48,)
    kernel_size: int = Field(default=3, ge=1)


class TrainConfig(Section):
    """Hyperparameters of one training run."""

    method: TrainMethod = TrainMethod.MIXUP
    alpha: float = Field(default=1.0, gt=0.0)
    epochs: int = Field(default=30, ge=0)
    batch_size: int = Field(default=64, ge=1)
    learning_rate: float | None = Field(default=None, gt=0.0)
    lr_decay_factor: float = Field(default=0.1, gt=0.0)
    lr_decay_epochs: tuple[int, ...] = (15, 22)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    attack_epsilon: float = Field(default=8 / 255, ge=0.0)
    attack_step_size: float = Field(default=2 / 255, gt=0.0)
    attack_steps: int = Field(default=10, ge=1)
    fixed_lambda: float | None = Field(default=None, ge=0.0, le=1.0)
    seed: int = 0

    @field_validator("lr_decay_epochs")
    @classmethod
    def _strictly_increasing(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"decay epochs must be strictly increasing, got {list(value)}")
        return value

    @property
    def initial_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_LEARNING_RATES[self.method]

    def learning_rate_at(self, epoch: int) -> float:
        """Rate for a 0-based epoch: initial * factor**k after the k-th decay epoch."""
        k = sum(1 for decay in self.lr_decay_epochs if epoch >= decay)
        return self.initial_learning_rate * self.lr_decay_factor**k


class AttackConfig(Section):
    """L-infinity PGD parameters."""

    mode: AttackMode = AttackMode.UNTARGETED
    target: int | None = Field(default=None, ge=0)
    epsilon: float = Field(default=8 / 255, ge=0.0)
    step_size: float = Field(default=2 / 255, gt=0.0)
    steps: int = Field(default=10, ge=1)
    restarts: int = Field(default=1, ge=1)
    adaptive: bool = False
    adaptive_samples: int = Field(default=1, ge=1)
    adaptive_mode: AdaptiveMode = AdaptiveMode.GRADIENT_SUM
    samples: int = Field(default=500, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _target_only_when_targeted(self) -> AttackConfig:
        if self.target is not None and self.mode is not AttackMode.TARGETED:
            raise ValueError("attack.target is only valid with attack.mode = 'targeted'")
        return self


class MIConfig(Section):
    """Mixup-inference hyperparameters."""

    variant: MIVariant = MIVariant.OL
    lam: float = Field(default=0.5, ge=0.0, le=1.0, alias="lambda")
    executions: int = Field(default=30, ge=1)
    lambda_pl: float = Field(default=0.5, ge=0.0, le=1.0)
    lambda_ol: float = Field(default=0.4, ge=0.0, le=1.0)
    # Signed: an input is flagged adversarial when its score is below this value.
    threshold: float = Field(default=-0.2, ge=-1.0, le=1.0)
    lambda_range: tuple[float, float] | None = None
    seed: int = 0

    @field_validator("lambda_range")
    @classmethod
    def _ordered_range(cls, value: tuple[float, float] | None) -> tuple[float, float] | None:
        if value is not None:
            low, high = value
            if not 0.0 <= low <= high <= 1.0:
                raise ValueError(f"lambda_range must satisfy 0 <= low <= high <= 1, got {value}")
        return value

    def with_variant(self, variant: MIVariant, lam: float | None = None) -> MIConfig:
        update: dict[str, Any] = {"variant": variant}
        if lam is not None:
            update["lam"] = lam
        return self.model_copy(update=update)


class DefenseConfig(Section):
    mi: MIConfig = Field(default_factory=MIConfig)
    noise_sigma: float = Field(default=0.04, ge=0.0)
    noise_executions: int = Field(default=30, ge=1)
    evaluate: tuple[DefenseKind, ...] = (
        DefenseKind.NONE,
        DefenseKind.MI_OL,
        DefenseKind.MI_COMBINED,
        DefenseKind.NOISE,
    )


class AnalysisConfig(Section):
    lambda_grid: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    noise_grid: tuple[float, ...] = (0.0, 0.02, 0.04, 0.06, 0.08, 0.1)
    ric_lambda_grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    adaptive_samples: tuple[int, ...] = (1, 2, 5, 10)
    ric_samples: int = Field(default=100, ge=1)
    detection_samples: int = Field(default=500, ge=1)
    sweep_samples: int = Field(default=200, ge=1)
    linearity_segments: int = Field(default=100, ge=1)
    oracle_lambdas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    oracle_classes: tuple[int, ...] = (2, 10, 100)

    @field_validator("lambda_grid", "ric_lambda_grid")
    @classmethod
    def _unit_interval(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if any(not 0.0 < lam <= 1.0 for lam in value):
            raise ValueError(f"lambda grid must lie in (0, 1], got {list(value)}")
        return value


class ExperimentConfig(Section):
    """One experiment: everything a run needs besides the seed override."""

    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = 0
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    defense: DefenseConfig = Field(default_factory=DefenseConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)

    @model_validator(mode="before")
    @classmethod
    def _propagate_seed(cls, data: Any) -> Any:
        # Sections without an explicit seed inherit the global one.
        if not isinstance(data, dict) or "seed" not in data:
            return data
        data = dict(data)
        seed = data["seed"]
        for name in ("train", "attack"):
            section = dict(data.get(name) or {})
            section.setdefault("seed", seed)
            data[name] = section
        defense = dict(data.get("defense") or {})
        mi = dict(defense.get("mi") or {})
        mi.setdefault("seed", seed)
        defense["mi"] = mi
        data["defense"] = defense
        return data

    def with_seed(self, seed: int) -> ExperimentConfig:
        """Copy with the global seed and every section seed replaced."""
        return self.model_copy(
            update={
                "seed": seed,
                "train": self.train.model_copy(update={"seed": seed}),
                "attack": self.attack.model_copy(update={"seed": seed}),
                "defense": self.defense.model_copy(
                    update={"mi": self.defense.mi.model_copy(update={"seed": seed})}
                ),
            }
        )


def load_config(path: Path, seed: int | None = None) -> ExperimentConfig:
    """Parse and validate a TOML experiment file."""
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise RejectedInputError(f"Malformed config {path}: {e}") from e
    config = ExperimentConfig.model_validate(raw)
    if seed is not None:
        config = config.with_seed(seed)
    return config
