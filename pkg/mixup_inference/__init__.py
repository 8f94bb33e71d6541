"""Mixup inference laboratory: training, PGD attacks, MI defenses and theory checks."""

__version__ = "1.0.0"
