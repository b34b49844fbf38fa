"""Small trainable building blocks on top of the tensor core.

Every block owns named Parameters and exposes them through ``parameters()``;
names are dot-paths so checkpoints stay stable across refactors. Weight
initialization is a pure function of the numpy Generator passed in.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError


class Block:
    """Base for parameterized layers; children register in ``_children``."""

    def __init__(self):
        self._params: list[T.Parameter] = []
        self._children: list["Block"] = []

    def parameters(self) -> list[T.Parameter]:
        out = list(self._params)
        for child in self._children:
            out.extend(child.parameters())
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in arrays:
                raise ConfigError(f"checkpoint is missing parameter '{p.name}'")
            p.assign(arrays[p.name])


def avg_pool2(x: T.Tensor) -> T.Tensor:
    """Exact 2x2 average pooling over the trailing spatial dims.

    Strided convolution cannot halve an even grid here (odd kernels make
    the output size fractional), so downsampling stages pair a stride-1
    convolution with this pool instead.
    """
    h, w = x.shape[-2], x.shape[-1]
    if h % 2 or w % 2:
        raise ConfigError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    lead = tuple(x.shape[:-2])
    y = T.reshape(x, lead + (h // 2, 2, w // 2, 2))
    return T.reduce_mean(y, axis=(-3, -1))


class Linear(Block):
    def __init__(self, name: str, din: int, dout: int, rng: np.random.Generator,
                 gain: str = "relu"):
        super().__init__()
        if din < 1 or dout < 1:
            raise ConfigError(f"{name}: linear dims must be positive, "
                              f"got {din}->{dout}")
        scale = np.sqrt((2.0 if gain == "relu" else 1.0) / din)
        self.w = T.Parameter(f"{name}.w", rng.standard_normal((din, dout)) * scale)
        self.b = T.Parameter(f"{name}.b", np.zeros(dout))
        self._params = [self.w, self.b]

    def __call__(self, x: T.Tensor) -> T.Tensor:
        return T.add(T.matmul(x, self.w), self.b)


class Conv(Block):
    """3x3 (or any odd k) convolution with bias, NCHW."""

    def __init__(self, name: str, cin: int, cout: int, rng: np.random.Generator,
                 k: int = 3, stride: int = 1, padding: int | None = None,
                 gain: str = "relu"):
        super().__init__()
        if padding is None:
            padding = k // 2
        fan_in = cin * k * k
        scale = np.sqrt((2.0 if gain == "relu" else 1.0) / fan_in)
        self.kernel = T.Parameter(f"{name}.k",
                                  rng.standard_normal((cout, cin, k, k)) * scale)
        self.bias = T.Parameter(f"{name}.b", np.zeros(cout))
        self.stride = stride
        self.padding = padding
        self._params = [self.kernel, self.bias]

    def __call__(self, x: T.Tensor) -> T.Tensor:
        y = T.conv2d(x, self.kernel, stride=self.stride, padding=self.padding)
        c = self.bias.shape[0]
        return T.add(y, T.reshape(self.bias, (c, 1, 1)))


class InstanceNorm(Block):
    def __init__(self, name: str, channels: int):
        super().__init__()
        self.gamma = T.Parameter(f"{name}.g", np.ones(channels))
        self.beta = T.Parameter(f"{name}.b", np.zeros(channels))
        self._params = [self.gamma, self.beta]

    def __call__(self, x: T.Tensor) -> T.Tensor:
        return T.instance_norm(x, self.gamma, self.beta)
