"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path

from pydantic import ValidationError

from .commands import (
    ADVERSARIAL_NAME,
    CHECKPOINT_NAME,
    SWEEP_KINDS,
    run_attack,
    run_defend,
    run_detect,
    run_oracle,
    run_sweep,
    run_train,
)
from .config import ExperimentConfig, load_config, settings
from .errors import LabError
from .jobs import create_job, run_pipeline

COMMANDS = ("train", "attack", "defend", "detect", "sweep", "oracle", "pipeline")


def setup_logging(log_path: Path) -> logging.Logger:
    """Setup logging to both file and console."""
    log_path.parent.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger("mixup_inference")
    logger.setLevel(logging.DEBUG)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    # File handler
    fh = logging.FileHandler(log_path, encoding="utf-8")
    fh.setLevel(logging.DEBUG)
    fh.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))

    # Console handler
    ch = logging.StreamHandler()
    ch.setLevel(settings.log_level.upper())
    ch.setFormatter(logging.Formatter("%(message)s"))

    logger.addHandler(fh)
    logger.addHandler(ch)

    return logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixup_inference",
        description="Train mixup classifiers, attack them with PGD, and defend or detect with Mixup Inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=Path, help="TOML experiment file (default: built-in desk defaults)")
        cmd.add_argument("--seed", type=int, help="Override the global seed")
        cmd.add_argument("--out", type=Path, default=settings.runs_dir, help="Output directory")
        if name in ("attack", "defend", "detect", "sweep"):
            cmd.add_argument("--checkpoint", type=Path, help=f"Model checkpoint (default: <out>/{CHECKPOINT_NAME})")
        if name in ("defend", "detect", "sweep"):
            cmd.add_argument("--adversarial", type=Path, help=f"Adversarial set (default: <out>/{ADVERSARIAL_NAME})")
        if name == "sweep":
            cmd.add_argument("--kind", choices=SWEEP_KINDS, default="tradeoff", help="Which sweep to run")
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is None:
        config = ExperimentConfig()
        return config.with_seed(args.seed) if args.seed is not None else config
    return load_config(args.config, seed=args.seed)


def dispatch(args: argparse.Namespace, config: ExperimentConfig) -> None:
    out: Path = args.out
    checkpoint = getattr(args, "checkpoint", None) or out / CHECKPOINT_NAME
    adversarial = getattr(args, "adversarial", None) or out / ADVERSARIAL_NAME
    if args.command == "train":
        run_train(config, out)
    elif args.command == "attack":
        run_attack(config, checkpoint, out)
    elif args.command == "defend":
        run_defend(config, checkpoint, adversarial, out)
    elif args.command == "detect":
        run_detect(config, checkpoint, adversarial, out)
    elif args.command == "sweep":
        run_sweep(config, checkpoint, out, args.kind, getattr(args, "adversarial", None))
    elif args.command == "oracle":
        run_oracle(config, out)
    else:
        run_pipeline(create_job(out, config.seed), config)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    log_path = args.out / "logs" / f"{args.command}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
    logger = setup_logging(log_path)

    try:
        config = _config(args)
        dispatch(args, config)
    except ValidationError as e:
        logger.error(f"Invalid config: {e}")
        return 1
    except (LabError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        logger.debug("Traceback", exc_info=True)
        return 1
    logger.info(f"{args.command} complete: {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
