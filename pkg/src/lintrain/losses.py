"""Per-sample convex losses with Lipschitz gradients.

Predictions and targets are stored column-wise, shape (m_y, n).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# gradient Lipschitz constants: squared loss 2; coordinate-wise logistic
# with |y| <= 1 has Hessian diag(y^2 s (1 - s)) <= 1/4
_ZETA = {"squared": 2.0, "logistic": 0.25}


@dataclass(frozen=True)
class LossSpec:
    kind: str = "squared"

    def __post_init__(self):
        if self.kind not in _ZETA:
            raise ValueError(f"unknown loss kind {self.kind!r}; choose from {sorted(_ZETA)}")

    @property
    def zeta(self):
        return _ZETA[self.kind]

    def per_sample(self, F, Y):
        """Loss of each column; returns shape (n,)."""
        F = np.asarray(F, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if self.kind == "squared":
            R = F - Y
            return np.sum(R * R, axis=0)
        return np.sum(np.logaddexp(0.0, -Y * F), axis=0)

    def value(self, F, Y):
        return float(np.mean(self.per_sample(F, Y)))

    def grad(self, F, Y):
        """Gradient of each per-sample loss with respect to its prediction."""
        F = np.asarray(F, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if self.kind == "squared":
            return 2.0 * (F - Y)
        return -Y * expit(-Y * F)
