"""
Exception hierarchy for GWCL.

Everything except TrainingDivergedError is also a ValueError, so callers
that guard with ``except ValueError`` keep working.
"""
from typing import Optional


class GwclError(Exception):
    """Base class for all GWCL errors"""


class DataFormatError(GwclError, ValueError):
    """Raw file, header or raster content is invalid"""


class SplitError(GwclError, ValueError):
    """A labeled/test split cannot be drawn"""


class ReductionError(GwclError, ValueError):
    """Spectral reduction cannot produce the requested components"""


class GraphError(GwclError, ValueError):
    """Invalid graph parameters or node indices"""


class ConfigError(GwclError, ValueError):
    """Invalid or unknown configuration value"""


class MetricUndefinedError(GwclError, ValueError):
    """A metric is undefined for the given confusion matrix"""


class TrainingDivergedError(GwclError):
    """A loss or gradient became non-finite during training"""

    def __init__(self, stage: str, step: int, detail: str, losses: Optional[dict] = None):
        self.stage = stage
        self.step = step
        self.losses = losses or {}
        super().__init__(f"{stage} diverged at step {step}: {detail} {self.losses}".strip())
