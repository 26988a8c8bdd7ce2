"""Parameter-owning building blocks: linear maps and normalization layers."""

from __future__ import annotations

import numpy as np

from .tensor import RunningStats, Tensor, batch_norm, layer_norm, matmul


def xavier_uniform(rng: np.random.Generator, d_in: int, d_out: int,
                   gain: float = 1.0) -> np.ndarray:
    r = gain * np.sqrt(6.0) / np.sqrt(d_in + d_out)
    return rng.uniform(-r, r, size=(d_in, d_out)).astype(np.float32)


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, gain: float = 1.0):
        self.w = Tensor.param(xavier_uniform(rng, d_in, d_out, gain))
        self.b = Tensor.param(np.zeros(d_out, dtype=np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.w)
        if self.b is not None:
            y = y + self.b
        return y

    def param_dict(self) -> dict[str, Tensor]:
        d = {"w": self.w}
        if self.b is not None:
            d["b"] = self.b
        return d


class LayerNorm:
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Tensor.param(np.ones(d, dtype=np.float32))
        self.beta = Tensor.param(np.zeros(d, dtype=np.float32))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)

    def param_dict(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}

    def buffer_dict(self) -> dict[str, np.ndarray]:
        return {}


class BatchNorm:
    """Channel batch norm with stats pooled over time, batch and token axes."""

    def __init__(self, d: int, eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = Tensor.param(np.ones(d, dtype=np.float32))
        self.beta = Tensor.param(np.zeros(d, dtype=np.float32))
        self.stats = RunningStats()
        self.d = d
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return batch_norm(x, self.gamma, self.beta, self.stats, train,
                          self.momentum, self.eps)

    def prime_identity(self):
        """Set running stats to mean 0 / var 1 (tests and fresh eval paths)."""
        self.stats.mean = np.zeros(self.d, dtype=np.float32)
        self.stats.var = np.ones(self.d, dtype=np.float32)
        self.stats.initialized = True

    def param_dict(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}

    def buffer_dict(self) -> dict[str, np.ndarray]:
        if not self.stats.initialized:
            return {}
        return {"running_mean": self.stats.mean, "running_var": self.stats.var}

    def load_buffers(self, buffers: dict[str, np.ndarray]):
        if "running_mean" in buffers:
            self.stats.mean = buffers["running_mean"].astype(np.float32).copy()
            self.stats.var = buffers["running_var"].astype(np.float32).copy()
            self.stats.initialized = True


def prefixed(d: dict, prefix: str) -> dict:
    return {f"{prefix}/{k}": v for k, v in d.items()}
