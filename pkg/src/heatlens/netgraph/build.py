"""Seeded construction of fresh networks."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    Layer,
    MaxPool2D,
    ReLU,
    Sigmoid,
)
from .network import Network


def build_network(architecture: Sequence[dict], input_shape, num_classes: int, seed: int = 0) -> Network:
    """Instantiate an architecture description with He-normal weights.

    Each entry is a dict with a ``kind`` plus kind-specific keys:
    ``Conv2D`` takes ``channels``, ``kernel``, ``stride``, ``pad``, ``bias``;
    ``Dense`` takes ``units`` (``None`` means ``num_classes``) and ``bias``;
    ``MaxPool2D`` takes ``size``. Biases start at zero.
    """
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    shape = tuple(input_shape)
    for entry in architecture:
        kind = entry["kind"]
        if kind == "Conv2D":
            k, ksz = entry["channels"], entry.get("kernel", 3)
            fan_in = shape[0] * ksz * ksz
            w = rng.standard_normal((k, shape[0], ksz, ksz)) * np.sqrt(2.0 / fan_in)
            b = np.zeros(k) if entry.get("bias", True) else None
            layer = Conv2D(w, b, entry.get("stride", 1), entry.get("pad", ksz // 2))
        elif kind == "Dense":
            units = entry.get("units") or num_classes
            w = rng.standard_normal((units, shape[0])) * np.sqrt(2.0 / shape[0])
            layer = Dense(w, np.zeros(units) if entry.get("bias", True) else None)
        elif kind == "MaxPool2D":
            layer = MaxPool2D(entry.get("size", 2), entry.get("stride"))
        elif kind == "BatchNorm":
            c = shape[0]
            layer = BatchNorm(np.zeros(c), np.ones(c), np.ones(c), np.zeros(c))
        else:
            layer = {"ReLU": ReLU, "Sigmoid": Sigmoid, "Flatten": Flatten, "GlobalAvgPool": GlobalAvgPool}[kind]()
        layers.append(layer)
        shape = layer.output_shape(shape)
    return Network(tuple(layers), tuple(input_shape), num_classes)


def toy_cnn_architecture(channels: Sequence[int] = (8, 8)) -> list[dict]:
    """Conv-ReLU blocks (2x2 max-pool between them), global average pool, logits.

    The last conv block keeps its resolution so Grad-CAM maps are not
    coarser than necessary.
    """
    arch: list[dict] = []
    for i, c in enumerate(channels):
        if i:
            arch.append({"kind": "MaxPool2D", "size": 2})
        arch += [{"kind": "Conv2D", "channels": c, "kernel": 3, "pad": 1}, {"kind": "ReLU"}]
    arch += [{"kind": "GlobalAvgPool"}, {"kind": "Dense", "units": None}]
    return arch
