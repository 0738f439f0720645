"""Layer-wise relevance propagation with the epsilon-stabilised rule.

Linear layers (Conv2D, Dense, global average pooling, and BatchNorm when it
cannot be folded) split each output's relevance over their inputs in
proportion to ``z_ij = x_i w_ij``, dividing by ``z_j + eps * sign(z_j)``.
Bias and epsilon absorb the rest, which is reported as leakage. ReLU and
Sigmoid pass relevance through, max-pooling sends it to the window winner.
A BatchNorm directly after a Conv2D/Dense is folded into that layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError, ShapeError
from ..netgraph.layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    MaxPool2D,
    ReLU,
    Sigmoid,
)
from ..netgraph.network import Network, forward
from ..tensor import as_tensor, conv2d_batch, conv2d_input_grad

ZERO_DENOMINATOR = 1e-12


@dataclass
class RelevanceMap:
    """Relevance at every layer boundary.

    ``layer_relevance[i]`` has the shape of layer ``i``'s input (batch axis
    dropped); the last entry is the seeded output relevance. ``leakage[i]``
    is the relevance absorbed by layer ``i`` (bias and stabiliser terms).
    """

    layer_relevance: list[np.ndarray]
    input_relevance: np.ndarray
    heatmap: np.ndarray
    epsilon: float
    class_index: int
    logit: float
    leakage: list[float] = field(default_factory=list)

    @property
    def total_leakage(self) -> float:
        return float(sum(self.leakage))


def _sign(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0, -1.0)


def _stabilised(z: np.ndarray, relevance: np.ndarray, eps: float, where: str) -> np.ndarray:
    denom = z + eps * _sign(z)
    if eps == 0.0:
        tiny = (np.abs(z) < ZERO_DENOMINATOR) & (relevance != 0)
        if tiny.any():
            raise NumericError(f"{where}: |z_j| < {ZERO_DENOMINATOR} with epsilon = 0; use epsilon > 0")
        safe = np.where(relevance == 0, 1.0, denom)
        return np.where(relevance == 0, 0.0, relevance / safe)
    return relevance / denom


def fold_batchnorm(layer, bn: BatchNorm):
    """Merge a frozen BatchNorm into the Conv2D/Dense feeding it."""
    gain, offset = bn.affine()
    bias = layer.bias if layer.bias is not None else np.zeros(layer.weight.shape[0])
    if isinstance(layer, Conv2D):
        return Conv2D(layer.weight * gain[:, None, None, None], bias * gain + offset, layer.stride, layer.pad)
    return Dense(layer.weight * gain[:, None], bias * gain + offset)


def _linear_rule(layer, x, r, eps, where):
    """Returns ``(input relevance, leakage)`` for Conv2D/Dense."""
    bias = layer.bias if layer.bias is not None else np.zeros(layer.weight.shape[0])
    if isinstance(layer, Conv2D):
        z = conv2d_batch(x, layer.weight, bias, layer.stride, layer.pad)
        s = _stabilised(z, r, eps, where)
        c = conv2d_input_grad(s, layer.weight, x.shape[2:], layer.stride, layer.pad)
        absorbed = (bias[None, :, None, None] + eps * _sign(z)) * s
    else:
        z = np.einsum("ni,oi->no", x, layer.weight) + bias
        s = _stabilised(z, r, eps, where)
        c = np.einsum("no,oi->ni", s, layer.weight)
        absorbed = (bias[None, :] + eps * _sign(z)) * s
    return x * c, float(absorbed.sum())


def lrp(net: Network, x: np.ndarray, class_index: int, epsilon: float = 1e-6) -> RelevanceMap:
    """Relevance of every input pixel for the logit of ``class_index``.

    The output relevance is the logit itself at ``class_index`` and zero
    elsewhere. The heatmap sums input relevance over channels and keeps its
    sign.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if not 0 <= class_index < net.num_classes:
        raise ShapeError(f"class_index {class_index} out of range for {net.num_classes} classes")
    x = as_tensor(x)
    logits, _, cache = forward(net, x)
    n = len(net.layers)
    rel: list[np.ndarray] = [None] * (n + 1)
    leak = [0.0] * n
    r = np.zeros((1, net.num_classes))
    r[0, class_index] = logits[class_index]
    rel[n] = r

    i = n - 1
    while i >= 0:
        layer = net.layers[i]
        xin = cache.inputs[i]
        where = f"layer {i} ({layer.kind})"
        if isinstance(layer, BatchNorm) and i > 0 and isinstance(net.layers[i - 1], (Conv2D, Dense)):
            folded = fold_batchnorm(net.layers[i - 1], layer)
            r_in, leak[i - 1] = _linear_rule(folded, cache.inputs[i - 1], r, epsilon, f"layers {i - 1}-{i} (folded BatchNorm)")
            rel[i] = r  # BatchNorm input carries the same relevance after folding
            r = r_in
            rel[i - 1] = r
            i -= 2
            continue
        if isinstance(layer, (Conv2D, Dense)):
            r, leak[i] = _linear_rule(layer, xin, r, epsilon, where)
        elif isinstance(layer, ReLU):
            active = xin > 0
            leak[i] = float(r[~active].sum())
            r = np.where(active, r, 0.0)
        elif isinstance(layer, Sigmoid):
            pass
        elif isinstance(layer, Flatten):
            r = r.reshape(xin.shape)
        elif isinstance(layer, MaxPool2D):
            r = layer.route(xin.shape, cache.aux[i], r)
        elif isinstance(layer, GlobalAvgPool):
            hw = xin.shape[2] * xin.shape[3]
            z = xin.mean(axis=(2, 3))
            s = _stabilised(z, r, epsilon, where)
            r = xin * (s / hw)[:, :, None, None]
            leak[i] = float((epsilon * _sign(z) * s).sum())
        elif isinstance(layer, BatchNorm):
            gain, offset = layer.affine()
            shape = (1, -1) + (1,) * (xin.ndim - 2)
            zi = xin * gain.reshape(shape)
            z = zi + offset.reshape(shape)
            s = _stabilised(z, r, epsilon, where)
            leak[i] = float(((offset.reshape(shape) + epsilon * _sign(z)) * s).sum())
            r = zi * s
        else:
            raise ShapeError(f"no relevance rule for layer kind {layer.kind}")
        rel[i] = r
        i -= 1

    if not all(np.all(np.isfinite(v)) for v in rel):
        raise NumericError("relevance propagation produced non-finite values; increase epsilon")
    layer_relevance = [v[0] for v in rel]
    inp = layer_relevance[0]
    return RelevanceMap(layer_relevance, inp, inp.sum(axis=0), float(epsilon), class_index, float(logits[class_index]), leak)
