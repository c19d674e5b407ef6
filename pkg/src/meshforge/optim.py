"""Adam optimizer over a single ndarray parameter."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Adam:
    """Standard Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: np.ndarray | None = field(default=None, repr=False)
    _v: np.ndarray | None = field(default=None, repr=False)
    _t: int = field(default=0, repr=False)

    def step(self, param: np.ndarray, grad: np.ndarray) -> None:
        """One in-place update of param."""
        if self._m is None:
            self._m = np.zeros_like(param)
            self._v = np.zeros_like(param)
        self._t += 1
        self._m = self.beta1 * self._m + (1.0 - self.beta1) * grad
        self._v = self.beta2 * self._v + (1.0 - self.beta2) * grad * grad
        m_hat = self._m / (1.0 - self.beta1**self._t)
        v_hat = self._v / (1.0 - self.beta2**self._t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self):
        return self._m, self._v, self._t

    def load_state(self, m, v, t):
        self._m = None if m is None else np.asarray(m)
        self._v = None if v is None else np.asarray(v)
        self._t = int(t)
