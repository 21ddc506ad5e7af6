"""Layers and optimization on top of the tensor core.

Only what the nets here need: 2D conv with bias, fan-in-scaled uniform init,
and an adaptive-moment optimizer.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def fanin_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    # He-scaled uniform: variance 2/fan_in so relu stacks keep activation
    # energy flat instead of decaying sixfold per layer
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2d:
    """Square-kernel convolution layer with bias."""

    def __init__(self, cin: int, cout: int, k: int, stride: int = 1, padding: int = 0,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        fan_in = cin * k * k
        self.weight = Tensor(fanin_uniform(rng, (cout, cin, k, k), fan_in, dtype), requires_grad=True)
        self.bias = Tensor(fanin_uniform(rng, (cout,), fan_in, dtype), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        out = T.conv2d(x, self.weight, stride=self.stride, padding=self.padding)
        cout = self.weight.shape[0]
        bshape = (1, cout, 1, 1) if out.ndim == 4 else (cout, 1, 1)
        return out + T.reshape(self.bias, bshape)

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Module:
    """Base with named-parameter bookkeeping for weight archives."""

    def named_parameters(self) -> dict[str, Tensor]:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.named_parameters().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        mine = self.named_parameters()
        missing = sorted(set(mine) - set(arrays))
        if missing:
            raise ValueError(f"weight archive missing tensors: {missing}")
        for name, p in mine.items():
            arr = np.asarray(arrays[name], dtype=p.dtype)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: archive shape {arr.shape} != parameter shape {p.shape}")
            p.data = arr.copy()

    def save(self, path, meta: dict | None = None) -> None:
        T.save_weights(path, {k: v for k, v in self.named_parameters().items()}, meta=meta)

    def load(self, path) -> dict:
        arrays, meta = T.load_weights(path)
        self.load_state_arrays(arrays)
        return meta


def conv_names(prefix: str, layer: Conv2d) -> dict[str, Tensor]:
    return {f"{prefix}.w": layer.weight, f"{prefix}.b": layer.bias}


class Adam:
    """Adaptive-moment stochastic optimizer with bias correction."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad.astype(p.dtype, copy=False)
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            mhat = self.m[i] / bc1
            vhat = self.v[i] / bc2
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
