"""Minibatch Adam on per-class binary cross-entropy."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import DataError, NumericError
from ..tensor import as_tensor
from .network import Network, backward, forward_batch

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy over samples and classes."""
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


def train(net: Network, images, labels, config: TrainConfig = TrainConfig()) -> tuple[Network, list[float]]:
    """Fit ``net`` to multi-label targets and return it with per-epoch losses.

    Labels must already be binary; uncertain labels are mapped to 0 by the
    caller. Given the same seed the returned weights are bit-identical.
    """
    x = as_tensor(images)
    y = as_tensor(labels)
    if len(x) == 0:
        raise DataError("training set is empty")
    if y.shape != (len(x), net.num_classes):
        raise DataError(f"labels shape {y.shape} != ({len(x)}, {net.num_classes})")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")

    layers = list(net.layers)
    moments = {
        (i, name): (np.zeros_like(p), np.zeros_like(p))
        for i, layer in enumerate(layers)
        for name in layer.trainable
        for p in [layer.params()[name]]
    }
    rng = np.random.default_rng(config.seed)
    step = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), config.batch_size):
            idx = order[start : start + config.batch_size]
            current = net.with_layers(layers)
            try:
                logits, cache = forward_batch(current, x[idx])
            except NumericError as exc:
                raise NumericError(f"training diverged at epoch {epoch}: {exc}; try a smaller learning rate") from None
            total += bce_with_logits(logits, y[idx]) * len(idx)
            grad = (expit(logits) - y[idx]) / logits.size
            _, _, pgrads = backward(current, cache, grad, want_params=True)
            step += 1
            bc1 = 1.0 - ADAM_BETA1**step
            bc2 = 1.0 - ADAM_BETA2**step
            for i, layer in enumerate(layers):
                if not layer.trainable:
                    continue
                updated = {}
                for name in layer.trainable:
                    g = pgrads[i][name]
                    m, v = moments[(i, name)]
                    m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
                    v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
                    moments[(i, name)] = (m, v)
                    p = layer.params()[name]
                    updated[name] = p - config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
                layers[i] = layer.replace(**updated)
        loss = total / len(x)
        if not np.isfinite(loss):
            raise NumericError(f"training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")
        history.append(loss)
        log.info("epoch %d loss %.6f", epoch, loss)
    return net.with_layers(layers), history
