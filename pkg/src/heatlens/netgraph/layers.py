"""Layer kinds with hand-written forward and backward passes.

Every layer works on batches: the leading axis of ``x`` is the sample
axis and ``in_shape``/``out_shape`` describe a single sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import DataError, ShapeError
from ..tensor import (
    conv2d_batch,
    conv2d_input_grad,
    conv2d_weight_grad,
    conv_output_size,
)


class Layer:
    kind: ClassVar[str] = ""
    #: names of parameters updated by the trainer
    trainable: ClassVar[tuple[str, ...]] = ()

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def hyper(self) -> dict:
        return {}

    def replace(self, **params) -> "Layer":
        """Copy of this layer with some parameter arrays swapped out."""
        merged = {**self.params(), **params}
        return type(self)(**merged, **self.hyper())

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, object]:
        raise NotImplementedError

    def backward(self, x, y, aux, grad_y) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Return the gradient w.r.t. ``x`` and w.r.t. each parameter."""
        raise NotImplementedError

    def __repr__(self):
        shapes = ", ".join(f"{k}={v.shape}" for k, v in self.params().items())
        hyper = ", ".join(f"{k}={v}" for k, v in self.hyper().items())
        return f"{self.kind}({', '.join(s for s in (shapes, hyper) if s)})"


@dataclass(repr=False, eq=False)
class Conv2D(Layer):
    weight: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    pad: int = 0

    kind: ClassVar[str] = "Conv2D"

    @property
    def trainable(self):
        return ("weight",) if self.bias is None else ("weight", "bias")

    def params(self):
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p

    def hyper(self):
        return {"stride": self.stride, "pad": self.pad}

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"Conv2D expects (C,H,W) input, got {in_shape}")
        k, c, kh, kw = self.weight.shape
        if c != in_shape[0]:
            raise ShapeError(f"Conv2D expects {c} input channels, got input shape {in_shape}")
        if self.bias is not None and self.bias.shape != (k,):
            raise ShapeError(f"Conv2D bias shape {self.bias.shape} does not match {k} kernels")
        h, w = in_shape[1:]
        if h + 2 * self.pad < kh or w + 2 * self.pad < kw:
            raise ShapeError(f"Conv2D kernel {kh}x{kw} larger than padded input {in_shape}")
        return (k, conv_output_size(h, kh, self.stride, self.pad), conv_output_size(w, kw, self.stride, self.pad))

    def forward(self, x):
        return conv2d_batch(x, self.weight, self.bias, self.stride, self.pad), None

    def backward(self, x, y, aux, grad_y):
        gx = conv2d_input_grad(grad_y, self.weight, x.shape[2:], self.stride, self.pad)
        grads = {"weight": conv2d_weight_grad(grad_y, x, self.weight.shape[2:], self.stride, self.pad)}
        if self.bias is not None:
            grads["bias"] = grad_y.sum(axis=(0, 2, 3))
        return gx, grads


@dataclass(repr=False, eq=False)
class Dense(Layer):
    """Affine map ``y = W x + b`` with ``weight`` of shape (out, in)."""

    weight: np.ndarray
    bias: np.ndarray | None = None

    kind: ClassVar[str] = "Dense"

    @property
    def trainable(self):
        return ("weight",) if self.bias is None else ("weight", "bias")

    def params(self):
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p

    def output_shape(self, in_shape):
        out, n_in = self.weight.shape
        if len(in_shape) != 1 or in_shape[0] != n_in:
            raise ShapeError(f"Dense expects input of shape ({n_in},), got {in_shape}")
        if self.bias is not None and self.bias.shape != (out,):
            raise ShapeError(f"Dense bias shape {self.bias.shape} does not match {out} outputs")
        return (out,)

    def forward(self, x):
        y = np.einsum("ni,oi->no", x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y, None

    def backward(self, x, y, aux, grad_y):
        gx = np.einsum("no,oi->ni", grad_y, self.weight)
        grads = {"weight": np.einsum("no,ni->oi", grad_y, x)}
        if self.bias is not None:
            grads["bias"] = grad_y.sum(axis=0)
        return gx, grads


@dataclass(repr=False, eq=False)
class ReLU(Layer):
    kind: ClassVar[str] = "ReLU"

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x):
        return np.maximum(x, 0.0), None

    def backward(self, x, y, aux, grad_y):
        # subgradient 0 at x == 0
        return grad_y * (x > 0), {}


@dataclass(repr=False, eq=False)
class Sigmoid(Layer):
    kind: ClassVar[str] = "Sigmoid"

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x):
        return expit(x), None

    def backward(self, x, y, aux, grad_y):
        return grad_y * y * (1.0 - y), {}


@dataclass(repr=False, eq=False)
class Flatten(Layer):
    kind: ClassVar[str] = "Flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), None

    def backward(self, x, y, aux, grad_y):
        return grad_y.reshape(x.shape), {}


@dataclass(repr=False, eq=False)
class GlobalAvgPool(Layer):
    kind: ClassVar[str] = "GlobalAvgPool"

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"GlobalAvgPool expects (C,H,W) input, got {in_shape}")
        return (in_shape[0],)

    def forward(self, x):
        return x.mean(axis=(2, 3)), None

    def backward(self, x, y, aux, grad_y):
        h, w = x.shape[2:]
        g = np.broadcast_to((grad_y / (h * w))[:, :, None, None], x.shape)
        return np.ascontiguousarray(g), {}


@dataclass(repr=False, eq=False)
class MaxPool2D(Layer):
    """Max pooling over ``size``x``size`` windows (stride defaults to size)."""

    size: int = 2
    stride: int | None = None

    kind: ClassVar[str] = "MaxPool2D"

    @property
    def step(self) -> int:
        return self.size if self.stride is None else self.stride

    def hyper(self):
        return {"size": self.size, "stride": self.step}

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"MaxPool2D expects (C,H,W) input, got {in_shape}")
        c, h, w = in_shape
        if h < self.size or w < self.size:
            raise ShapeError(f"MaxPool2D window {self.size} larger than input {in_shape}")
        return (c, conv_output_size(h, self.size, self.step, 0), conv_output_size(w, self.size, self.step, 0))

    def _windows(self, x):
        n, c, h, w = x.shape
        ho = conv_output_size(h, self.size, self.step, 0)
        wo = conv_output_size(w, self.size, self.step, 0)
        win = sliding_window_view(x, (self.size, self.size), axis=(2, 3))
        win = win[:, :, : ho * self.step : self.step, : wo * self.step : self.step]
        return win.reshape(n, c, ho, wo, self.size * self.size)

    def forward(self, x):
        win = self._windows(x)
        arg = win.argmax(axis=-1)
        y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return y, arg

    def winner_index(self, x_shape, arg) -> np.ndarray:
        """Flat (H*W) input position of each window's winner."""
        _, _, h, w = x_shape
        ho, wo = arg.shape[2:]
        dy, dx = np.divmod(arg, self.size)
        rows = np.arange(ho)[:, None] * self.step + dy
        cols = np.arange(wo)[None, :] * self.step + dx
        return rows * w + cols

    def route(self, x_shape, arg, values) -> np.ndarray:
        """Scatter-add per-window ``values`` onto the winning inputs."""
        n, c, h, w = x_shape
        flat = self.winner_index(x_shape, arg).reshape(n * c, -1)
        out = np.zeros((n * c, h * w))
        rows = np.repeat(np.arange(n * c), flat.shape[1])
        np.add.at(out, (rows, flat.ravel()), values.reshape(n * c, -1).ravel())
        return out.reshape(x_shape)

    def backward(self, x, y, aux, grad_y):
        return self.route(x.shape, aux, grad_y), {}


@dataclass(repr=False, eq=False)
class BatchNorm(Layer):
    """Frozen batch normalisation over the channel axis (axis 0 of a sample)."""

    mean: np.ndarray
    var: np.ndarray
    scale: np.ndarray
    shift: np.ndarray
    eps: float = 1e-5

    kind: ClassVar[str] = "BatchNorm"
    trainable: ClassVar[tuple[str, ...]] = ("scale", "shift")

    def __post_init__(self):
        if np.any(np.asarray(self.var) <= 0):
            raise DataError("BatchNorm variance entries must be > 0")

    def params(self):
        return {"mean": self.mean, "var": self.var, "scale": self.scale, "shift": self.shift}

    def hyper(self):
        return {"eps": self.eps}

    def output_shape(self, in_shape):
        c = self.mean.shape[0]
        for name, p in self.params().items():
            if p.shape != (c,):
                raise ShapeError(f"BatchNorm {name} shape {p.shape}, expected ({c},)")
        if len(in_shape) < 1 or in_shape[0] != c:
            raise ShapeError(f"BatchNorm over {c} channels got input shape {in_shape}")
        return tuple(in_shape)

    def affine(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel ``(gain, offset)`` such that ``y = gain * x + offset``."""
        gain = self.scale / np.sqrt(self.var + self.eps)
        return gain, self.shift - self.mean * gain

    def _bcast(self, v, ndim):
        return v.reshape((1, -1) + (1,) * (ndim - 2))

    def forward(self, x):
        gain, offset = self.affine()
        return x * self._bcast(gain, x.ndim) + self._bcast(offset, x.ndim), None

    def backward(self, x, y, aux, grad_y):
        inv = 1.0 / np.sqrt(self.var + self.eps)
        xhat = (x - self._bcast(self.mean, x.ndim)) * self._bcast(inv, x.ndim)
        axes = (0,) + tuple(range(2, x.ndim))
        grads = {"scale": (grad_y * xhat).sum(axis=axes), "shift": grad_y.sum(axis=axes)}
        return grad_y * self._bcast(self.scale * inv, x.ndim), grads


LAYER_KINDS: dict[str, type[Layer]] = {
    cls.kind: cls for cls in (Conv2D, Dense, ReLU, Sigmoid, MaxPool2D, GlobalAvgPool, BatchNorm, Flatten)
}
