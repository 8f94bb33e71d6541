"""Theory checks and experiment metrics.

Submodules are imported directly (``from mixup_inference.analysis.theory import ...``)
so that the inference layer can depend on :mod:`.bounds` without pulling in the
experiment drivers.
"""
