"""Tracked end-to-end pipeline job: train -> attack -> defend -> detect."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path

from .artifacts import write_json
from .commands import run_attack, run_defend, run_detect, run_train
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

STEPS = {
    1: "Training classifier",
    2: "Crafting adversarial examples",
    3: "Evaluating defenses",
    4: "Scoring detection",
}


class JobStatus(str, Enum):
    """Lifecycle of a pipeline job, persisted in job.json."""

    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class Job:
    """One pipeline run writing into ``out_dir``."""

    id: str
    out_dir: Path
    seed: int
    status: JobStatus = JobStatus.PENDING
    current_step: int = 0  # 0-4
    step_name: str = "Initializing"
    started_at: datetime = field(default_factory=datetime.now)
    completed_at: datetime | None = None
    result: dict | None = None
    error: str | None = None

    def to_json(self) -> dict:
        payload = asdict(self)
        payload["out_dir"] = str(self.out_dir)
        payload["status"] = self.status.value
        payload["started_at"] = self.started_at.isoformat()
        payload["completed_at"] = self.completed_at.isoformat() if self.completed_at else None
        return payload


def create_job(out_dir: Path, seed: int) -> Job:
    return Job(id=f"pipeline_{seed}_{datetime.now().strftime('%Y%m%d_%H%M%S')}", out_dir=out_dir, seed=seed)


def _enter(job: Job, step: int) -> None:
    job.current_step, job.step_name = step, STEPS[step]
    logger.info(f"Step {step}: {job.step_name}")
    write_json(job.out_dir / "job.json", job.to_json())


def run_pipeline(job: Job, config: ExperimentConfig) -> Job:
    """Run every stage in order; job.json tracks progress and the outcome."""
    job.status = JobStatus.RUNNING
    job.started_at = datetime.now()
    out = job.out_dir
    try:
        _enter(job, 1)
        checkpoint = run_train(config, out)
        _enter(job, 2)
        adversarial = run_attack(config, checkpoint, out)
        _enter(job, 3)
        defense = run_defend(config, checkpoint, adversarial, out)
        _enter(job, 4)
        detection, summary = run_detect(config, checkpoint, adversarial, out)

        job.status = JobStatus.COMPLETED
        job.step_name = "Completed"
        job.result = {
            "checkpoint": str(checkpoint),
            "adversarial": str(adversarial),
            "defense": str(defense),
            "detection": str(detection),
            "summary": str(summary),
        }
    except Exception as e:
        job.status = JobStatus.FAILED
        job.error = str(e)
        logger.error(f"Pipeline failed at step {job.current_step} ({job.step_name}): {e}")
        raise
    finally:
        job.completed_at = datetime.now()
        write_json(out / "job.json", job.to_json())
    return job
