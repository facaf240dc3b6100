"""Adaptive-moment gradient descent over a named parameter registry."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ContractError


class Adam:
    """Bias-corrected first/second moment updates, applied in place.

    State is keyed by parameter name; a parameter whose shape changes
    (e.g. an expanded classifier head) must get a fresh optimizer.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"lr must be > 0, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        missing = set(params) - set(grads)
        if missing:
            raise ContractError(f"gradients missing for parameters {sorted(missing)}")
        for name, g in grads.items():
            if name in params and not np.all(np.isfinite(g)):
                raise ContractError(f"non-finite gradient for parameter {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
