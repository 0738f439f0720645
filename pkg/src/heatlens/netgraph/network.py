"""Sequential networks: shape checking, cached forward pass, gradient backward."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from ..errors import NumericError, ShapeError
from ..tensor import as_tensor
from .layers import Conv2D, Layer


@dataclass(frozen=True, eq=False)
class Network:
    """An ordered stack of layers ending in ``num_classes`` logits.

    The output head is a per-class sigmoid applied by :func:`forward`;
    the last layer produces the pre-sigmoid logits.
    """

    layers: tuple[Layer, ...]
    input_shape: tuple[int, int, int]
    num_classes: int
    shapes: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "shapes", infer_shapes(self.layers, self.input_shape, self.num_classes))

    def __len__(self):
        return len(self.layers)

    def conv_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, Conv2D)]

    def with_layers(self, layers: Sequence[Layer]) -> "Network":
        return Network(tuple(layers), self.input_shape, self.num_classes)


def infer_shapes(layers, input_shape, num_classes) -> tuple[tuple[int, ...], ...]:
    """Per-sample shapes: entry 0 is the input, entry i+1 the output of layer i."""
    if len(input_shape) != 3 or min(input_shape) < 1:
        raise ShapeError(f"input_shape must be (C,H,W) with positive extents, got {input_shape}")
    if not layers:
        raise ShapeError("network has no layers")
    shapes = [tuple(input_shape)]
    for i, layer in enumerate(layers):
        try:
            shapes.append(tuple(int(s) for s in layer.output_shape(shapes[-1])))
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
    if shapes[-1] != (num_classes,):
        raise ShapeError(f"final layer {len(layers) - 1} outputs shape {shapes[-1]}, expected ({num_classes},) logits")
    return tuple(shapes)


@dataclass(eq=False)
class ActivationCache:
    """Per-layer inputs/outputs of one forward pass, with a leading batch axis.

    ``inputs[i]`` and ``outputs[i]`` are the tensors entering and leaving
    layer ``i``; ``aux[i]`` holds pooling argmax indices (else ``None``).
    ``single`` records whether the pass was for one unbatched instance.
    """

    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    aux: list
    single: bool = False

    def activation(self, i: int) -> np.ndarray:
        """Output of layer ``i`` for an unbatched pass."""
        return self.outputs[i][0] if self.single else self.outputs[i]

    def check(self, net: Network) -> None:
        if len(self.outputs) != len(net.layers):
            raise ShapeError(f"stale cache: {len(self.outputs)} entries for a {len(net.layers)}-layer network")
        for i, (a, b) in enumerate(zip(self.inputs, self.outputs)):
            if a.shape[1:] != net.shapes[i] or b.shape[1:] != net.shapes[i + 1]:
                raise ShapeError(
                    f"stale cache at layer {i}: cached {a.shape[1:]}->{b.shape[1:]}, "
                    f"network expects {net.shapes[i]}->{net.shapes[i + 1]}"
                )


def forward_batch(net: Network, x: np.ndarray) -> tuple[np.ndarray, ActivationCache]:
    """Logits ``(N, num_classes)`` and the activation cache for a batch."""
    x = as_tensor(x)
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} does not match network input {net.input_shape}")
    inputs, outputs, aux = [], [], []
    h = x
    for i, layer in enumerate(net.layers):
        y, a = layer.forward(h)
        if not np.all(np.isfinite(y)):
            raise NumericError(f"non-finite activation at layer {i} ({layer.kind})")
        inputs.append(h)
        outputs.append(y)
        aux.append(a)
        h = y
    return h, ActivationCache(inputs, outputs, aux)


def predict_logits(net: Network, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Batched logits; results do not depend on ``batch_size``."""
    x = as_tensor(x)
    parts = [forward_batch(net, x[i : i + batch_size])[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(parts) if parts else np.zeros((0, net.num_classes))


def predict_proba(net: Network, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    return expit(predict_logits(net, x, batch_size))


def forward(net: Network, input: np.ndarray) -> tuple[np.ndarray, np.ndarray, ActivationCache]:
    """Forward one ``(C,H,W)`` instance.

    Returns the logits, the sigmoid probabilities and the activation cache.
    """
    x = as_tensor(input)
    if x.shape != net.input_shape:
        raise ShapeError(f"input shape {x.shape} does not match network input {net.input_shape}")
    logits, cache = forward_batch(net, x[None])
    cache.single = True
    return logits[0], expit(logits[0]), cache


class Gradients(NamedTuple):
    """``input`` is d(logit)/d(input); ``activations[i]`` is d(logit)/d(output of layer i)."""

    input: np.ndarray
    activations: list[np.ndarray]


def backward(net: Network, cache: ActivationCache, grad_logits: np.ndarray, want_params: bool = False):
    """Propagate ``grad_logits`` (N, num_classes) back through the network.

    Returns ``(grad_input, activation_grads, param_grads)`` where
    ``param_grads[i]`` is a dict per layer (empty unless ``want_params``).
    """
    cache.check(net)
    g = grad_logits
    act_grads: list[np.ndarray] = [None] * len(net.layers)
    param_grads: list[dict] = [{} for _ in net.layers]
    for i in range(len(net.layers) - 1, -1, -1):
        act_grads[i] = g
        layer = net.layers[i]
        g, pg = layer.backward(cache.inputs[i], cache.outputs[i], cache.aux[i], g)
        if want_params:
            param_grads[i] = pg
    return g, act_grads, param_grads


def backward_gradient(net: Network, cache: ActivationCache, class_index: int) -> Gradients:
    """Gradient of the pre-sigmoid logit ``y_c`` w.r.t. the input and every activation."""
    if not 0 <= class_index < net.num_classes:
        raise ShapeError(f"class_index {class_index} out of range for {net.num_classes} classes")
    n = cache.outputs[-1].shape[0]
    seed = np.zeros((n, net.num_classes))
    seed[:, class_index] = 1.0
    gx, acts, _ = backward(net, cache, seed)
    if cache.single:
        return Gradients(gx[0], [a[0] for a in acts])
    return Gradients(gx, acts)
