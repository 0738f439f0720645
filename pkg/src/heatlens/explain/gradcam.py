"""Grad-CAM: gradient-weighted sums of convolutional activation maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, ShapeError
from ..netgraph.layers import Conv2D, ReLU
from ..netgraph.network import Network, backward_gradient, forward
from ..tensor import as_tensor, bilinear_resize


@dataclass
class GradCamMap:
    conv_layer: int
    target_layer: int  # layer whose output supplied the activations
    alpha: np.ndarray
    raw_map: np.ndarray
    heatmap: np.ndarray
    class_index: int


def select_last_conv(net: Network) -> int:
    """Index of the deepest Conv2D layer."""
    convs = net.conv_indices()
    if not convs:
        raise DataError("network has no Conv2D layer; Grad-CAM needs one")
    return convs[-1]


def eligible_layers(net: Network) -> list[int]:
    """Conv2D layers and the ReLUs applied directly to them."""
    out = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Conv2D):
            out.append(i)
        elif isinstance(layer, ReLU) and i > 0 and isinstance(net.layers[i - 1], Conv2D):
            out.append(i)
    return out


def resolve_target(net: Network, target_layer) -> tuple[int, int]:
    """Map a layer request onto ``(conv index, activation index)``.

    A Conv2D followed by a ReLU is read after the ReLU.
    """
    if target_layer in (None, "last-conv"):
        conv = select_last_conv(net)
    else:
        idx = int(target_layer)
        if idx not in eligible_layers(net):
            raise DataError(f"layer {idx} is not convolutional; eligible Grad-CAM layers: {eligible_layers(net)}")
        if isinstance(net.layers[idx], ReLU):
            return idx - 1, idx
        conv = idx
    nxt = conv + 1
    if nxt < len(net.layers) and isinstance(net.layers[nxt], ReLU):
        return conv, nxt
    return conv, conv


def spatial_mean(a: np.ndarray) -> float:
    """Correctly rounded mean of a feature map; exact when every entry is equal
    and the entry count is a power of two."""
    return math.fsum(a.ravel()) / a.size


def weighted_map(alpha: np.ndarray, activations: np.ndarray) -> np.ndarray:
    """``sum_k alpha[k] * activations[k]`` accumulated in channel order."""
    acc = np.zeros(activations.shape[1:])
    for k in range(activations.shape[0]):
        acc = acc + alpha[k] * activations[k]
    return acc


def grad_cam(net: Network, x: np.ndarray, class_index: int, target_layer="last-conv") -> GradCamMap:
    """Grad-CAM map of logit ``class_index`` at a convolutional layer.

    Channel weights are the spatial means of the logit's gradient over
    each activation map; the map is the ReLU of the weighted activation sum,
    bilinearly upsampled to the input size.
    """
    x = as_tensor(x)
    conv, act = resolve_target(net, target_layer)
    _, _, cache = forward(net, x)
    grads = backward_gradient(net, cache, class_index)
    a = cache.activation(act)
    g = grads.activations[act]
    if a.ndim != 3:
        raise ShapeError(f"layer {act} output {a.shape} is not a (C,H,W) map")
    alpha = np.array([spatial_mean(g[k]) for k in range(g.shape[0])])
    raw = np.maximum(weighted_map(alpha, a), 0.0)
    heat = bilinear_resize(raw, *net.input_shape[1:])
    return GradCamMap(conv, act, alpha, raw, heat, class_index)
