"""Exception types shared across the package."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Invalid user input (data, configuration or family/response mismatch)."""


class NumericalRankError(np.linalg.LinAlgError):
    """Normal equations are singular even after the pivoted fallback."""


class FitDivergenceError(RuntimeError):
    """IRLS did not converge. Carries the last iterate and, when known, the node."""

    def __init__(self, message: str, theta=None, node: int | None = None):
        super().__init__(message)
        self.theta = theta
        self.node = node


class PandaRegularityWarning(UserWarning):
    """Noise scale too large for the asymptotic inference to be trusted."""
