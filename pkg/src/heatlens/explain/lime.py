"""LIME for images: superpixel toggling, kernel weights, lasso surrogate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from ..errors import DataError, NumericError, ShapeError
from ..netgraph.network import Network, predict_proba
from ..tensor import as_tensor
from .lasso import lasso_auto, weighted_lasso
from .superpixels import SuperpixelMap, segment_superpixels

log = logging.getLogger(__name__)

PredictFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LimeConfig:
    num_samples: int = 1000
    kernel_width: float = 0.25
    lasso_lambda: Union[float, str] = "auto"
    max_features: int = 10
    baseline: str = "mean"
    seed: int = 0
    num_segments: int = 50
    batch_size: int = 256
    surrogate_family: str = field(default="sparse linear (lasso)", init=False)

    def __post_init__(self):
        if self.kernel_width <= 0:
            raise DataError(f"kernel_width must be > 0, got {self.kernel_width}")
        if self.lasso_lambda != "auto" and not (isinstance(self.lasso_lambda, (int, float)) and self.lasso_lambda >= 0):
            raise DataError(f"lasso_lambda must be 'auto' or >= 0, got {self.lasso_lambda!r}")
        if self.baseline not in ("mean", "zero"):
            raise DataError(f"baseline must be 'mean' or 'zero', got {self.baseline!r}")
        if self.max_features < 1:
            raise DataError("max_features must be >= 1")


@dataclass
class LimeSamples:
    """Binary segment selections, black-box outputs and kernel weights.

    Row 0 is always the unperturbed instance (all segments kept).
    ``values`` is ``(N,)`` or ``(N, K)`` when the black box scores K classes.
    """

    z: np.ndarray
    values: np.ndarray
    weights: np.ndarray


@dataclass
class LimeExplanation:
    coefficients: np.ndarray
    intercept: float
    r2: float
    r2_raw: float
    lam: float
    heatmap: np.ndarray
    superpixels: SuperpixelMap
    class_index: int | None
    config: LimeConfig
    warnings: list[str] = field(default_factory=list)


def baseline_image(x: np.ndarray, kind: str) -> np.ndarray:
    """Replacement pixel values for switched-off segments, shape ``(C,1,1)``."""
    if kind == "zero":
        return np.zeros((x.shape[0], 1, 1))
    return x.mean(axis=(1, 2), keepdims=True)


def perturb(x: np.ndarray, sp: SuperpixelMap, z: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    """Images ``(N,C,H,W)`` keeping segments where ``z`` is 1 and baseline elsewhere."""
    keep = sp.keep_masks(z)[:, None]
    return np.where(keep, x[None], baseline[None])


def evaluate_black_box(predict: PredictFn, x, sp, z, baseline, batch_size: int) -> np.ndarray:
    """Run ``predict`` over perturbations of ``x`` in fixed-size chunks."""
    outs = []
    for start in range(0, len(z), batch_size):
        chunk = np.asarray(predict(perturb(x, sp, z[start : start + batch_size], baseline)), dtype=np.float64)
        bad = ~np.isfinite(chunk.reshape(len(chunk), -1)).all(axis=1)
        if bad.any():
            raise NumericError(f"black box returned a non-finite value for sample {start + int(np.argmax(bad))}")
        outs.append(chunk)
    return np.concatenate(outs)


def cosine_distance_to_ones(z: np.ndarray) -> np.ndarray:
    """Cosine distance between each binary row and the all-ones vector (1 for an empty row)."""
    z = np.asarray(z, dtype=np.float64)
    on = z.sum(axis=1)
    return np.where(on > 0, 1.0 - np.sqrt(on / z.shape[1]), 1.0)


def sample_neighborhood(x: np.ndarray, sp: SuperpixelMap, cfg: LimeConfig, predict: PredictFn) -> LimeSamples:
    """Draw ``cfg.num_samples`` random segment subsets plus the unperturbed row.

    Each segment is kept with probability 1/2; a random row that keeps every
    segment is redrawn so only the instance itself gets weight 1.
    """
    x = as_tensor(x)
    if x.shape[1:] != sp.shape:
        raise ShapeError(f"superpixel map {sp.shape} does not match instance {x.shape}")
    s = sp.n_segments
    if cfg.num_samples < s:
        raise DataError(f"num_samples ({cfg.num_samples}) must be >= segment count ({s})")
    rng = np.random.default_rng(cfg.seed)
    z = rng.integers(0, 2, size=(cfg.num_samples, s), dtype=np.uint8)
    full = z.all(axis=1)
    while full.any():
        z[full] = rng.integers(0, 2, size=(int(full.sum()), s), dtype=np.uint8)
        full = z.all(axis=1)
    z = np.vstack([np.ones((1, s), dtype=np.uint8), z])
    values = evaluate_black_box(predict, x, sp, z, baseline_image(x, cfg.baseline), cfg.batch_size)
    d = cosine_distance_to_ones(z)
    weights = np.exp(-(d**2) / cfg.kernel_width**2)
    return LimeSamples(z, values, weights)


def _weighted_r2(y, pred, w) -> float:
    wn = w / w.sum()
    ss_tot = float(np.dot(wn, (y - np.dot(wn, y)) ** 2))
    ss_res = float(np.dot(wn, (y - pred) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def fit_surrogate(samples: LimeSamples, cfg: LimeConfig, sp: SuperpixelMap | None = None, class_index: int | None = None) -> LimeExplanation:
    """Fit the weighted sparse linear surrogate to the sampled outputs.

    With ``cfg.lasso_lambda == "auto"`` the penalty is the smallest on a
    0.7-geometric path from ``lambda_max`` that keeps at most
    ``cfg.max_features`` nonzero coefficients.
    """
    z = np.asarray(samples.z, dtype=np.float64)
    y = samples.values
    if y.ndim == 2:
        if class_index is None:
            raise DataError("multi-class sample values need a class_index")
        y = y[:, class_index]
    if len(z) < z.shape[1] + 1:
        raise DataError(f"need at least {z.shape[1] + 1} samples for {z.shape[1]} segments, got {len(z)}")
    if cfg.lasso_lambda == "auto":
        fit = lasso_auto(z, y, samples.weights, cfg.max_features, tol=1e-10)
    else:
        fit = weighted_lasso(z, y, samples.weights, float(cfg.lasso_lambda))
    warnings = [f"segment {j} is never toggled; coefficient forced to 0" for j in fit.degenerate]
    for msg in warnings:
        log.warning(msg)
    r2_raw = _weighted_r2(y, fit.intercept + z @ fit.coef, samples.weights)
    heatmap = sp.paint(fit.coef) if sp is not None else None
    return LimeExplanation(
        coefficients=fit.coef,
        intercept=fit.intercept,
        r2=min(1.0, max(0.0, r2_raw)),
        r2_raw=r2_raw,
        lam=fit.lam,
        heatmap=heatmap,
        superpixels=sp,
        class_index=class_index,
        config=cfg,
        warnings=warnings,
    )


def network_black_box(net: Network, class_index: int | None = None) -> PredictFn:
    """Sigmoid probabilities of ``net``: all classes, or one column."""

    def predict(images: np.ndarray) -> np.ndarray:
        p = predict_proba(net, images)
        return p if class_index is None else p[:, class_index]

    return predict


def explain_lime(net: Network, x: np.ndarray, class_index: int, cfg: LimeConfig = LimeConfig(), sp: SuperpixelMap | None = None) -> LimeExplanation:
    """LIME heatmap for ``class_index``: the surrogate coefficient painted over each segment."""
    if not 0 <= class_index < net.num_classes:
        raise ShapeError(f"class_index {class_index} out of range for {net.num_classes} classes")
    x = as_tensor(x)
    if sp is None:
        sp = segment_superpixels(x, cfg.num_segments, cfg.seed)
    samples = sample_neighborhood(x, sp, cfg, network_black_box(net))
    return fit_surrogate(samples, cfg, sp, class_index)
