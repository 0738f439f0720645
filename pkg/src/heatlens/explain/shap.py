"""Shapley attributions over superpixels: exact enumeration and KernelSHAP."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DataError, NumericError, ShapeError
from ..netgraph.network import Network
from ..tensor import as_tensor
from .lime import baseline_image, evaluate_black_box, network_black_box
from .superpixels import SuperpixelMap, segment_superpixels

log = logging.getLogger(__name__)

MAX_EXACT_FEATURES = 20
RIDGE_JITTER = 1e-10


def _popcounts(m: int) -> np.ndarray:
    pc = np.zeros(1 << m, dtype=np.int64)
    for bit in range(m):
        pc[1 << bit : 1 << (bit + 1)] = pc[: 1 << bit] + 1
    return pc


def coalition_matrix(m: int) -> np.ndarray:
    """All ``2^m`` coalitions as rows; row ``k`` has feature ``i`` iff bit ``i`` of ``k`` is set."""
    return ((np.arange(1 << m)[:, None] >> np.arange(m)[None, :]) & 1).astype(np.uint8)


def shapley_from_table(values: np.ndarray) -> np.ndarray:
    """Shapley values from a full table ``values[k] = v(coalition k)`` (bitmask order)."""
    values = np.asarray(values, dtype=np.float64)
    m = int(round(math.log2(len(values))))
    if 1 << m != len(values):
        raise ShapeError(f"value table length {len(values)} is not a power of two")
    pc = _popcounts(m)
    fm = math.factorial(m)
    weight = np.array([math.factorial(s) * math.factorial(m - s - 1) / fm for s in range(m)])
    masks = np.arange(1 << m)
    phi = np.zeros(m)
    for i in range(m):
        without = masks[(masks >> i) & 1 == 0]
        phi[i] = np.sum(weight[pc[without]] * (values[without | (1 << i)] - values[without]))
    return phi


def exact_shapley(value_fn: Callable[[np.ndarray], float], m: int) -> np.ndarray:
    """Shapley value of each of ``m`` players by enumerating every coalition.

    ``value_fn`` receives a 0/1 vector of length ``m`` and returns the
    coalition's worth.
    """
    if m > MAX_EXACT_FEATURES:
        raise DataError(f"exact_shapley enumerates 2^M coalitions; M={m} > {MAX_EXACT_FEATURES}, use kernel_shap")
    if m < 1:
        raise DataError("need at least one player")
    table = np.array([float(value_fn(z)) for z in coalition_matrix(m)])
    return shapley_from_table(table)


def shapley_kernel_weight(m: int, size: np.ndarray) -> np.ndarray:
    """KernelSHAP weight (M-1) / (C(M,|z|) |z| (M-|z|)) for 0 < |z| < M."""
    size = np.asarray(size)
    comb = np.array([math.comb(m, int(s)) for s in size.ravel()], dtype=np.float64).reshape(size.shape)
    return (m - 1) / (comb * size * (m - size))


def sample_coalitions(m: int, num_coalitions: int, seed: int) -> tuple[np.ndarray, bool]:
    """Proper, nonempty coalitions to evaluate, and whether they are all of them.

    A budget of at least ``2^M - 2`` enumerates every coalition. Otherwise
    coalitions are drawn uniformly from ``{0,1}^M`` (empty and full rows
    redrawn), each paired with its complement.
    """
    if m < 1:
        raise DataError("need at least one feature")
    total = (1 << m) - 2 if m < 63 else None
    if total is not None and num_coalitions >= total:
        z = coalition_matrix(m)[1:-1]
        return z, True
    rng = np.random.default_rng(seed)
    half = (num_coalitions + 1) // 2
    z = rng.integers(0, 2, size=(half, m), dtype=np.uint8)
    bad = z.all(axis=1) | ~z.any(axis=1)
    while bad.any():
        z[bad] = rng.integers(0, 2, size=(int(bad.sum()), m), dtype=np.uint8)
        bad = z.all(axis=1) | ~z.any(axis=1)
    pairs = np.empty((2 * half, m), dtype=np.uint8)
    pairs[0::2] = z
    pairs[1::2] = 1 - z
    return pairs[:num_coalitions], False


def solve_kernel_shap(z: np.ndarray, values: np.ndarray, base_value: float, full_value: float) -> tuple[np.ndarray, list[str]]:
    """Shapley-kernel weighted least squares with ``sum(phi) = full - base`` imposed exactly.

    The constraint is eliminated by substituting the last coefficient, and
    the reduced normal equations are solved directly; an ill-conditioned
    system gets a ridge of ``1e-10`` and a warning.
    """
    z = np.asarray(z, dtype=np.float64)
    m = z.shape[1]
    delta = full_value - base_value
    if m == 1:
        return np.array([delta]), []
    size = z.sum(axis=1)
    w = shapley_kernel_weight(m, size)
    design = z[:, :-1] - z[:, -1:]
    target = np.asarray(values, dtype=np.float64) - base_value - z[:, -1] * delta
    gram = np.einsum("n,ni,nj->ij", w, design, design)
    rhs = np.einsum("n,ni,n->i", w, design, target)
    warnings = []
    if not np.isfinite(np.linalg.cond(gram)) or np.linalg.cond(gram) > 1e12:
        warnings.append(f"singular KernelSHAP system ({len(z)} coalitions, M={m}); ridge {RIDGE_JITTER} added")
        log.warning(warnings[-1])
        gram = gram + RIDGE_JITTER * np.eye(m - 1)
    head = np.linalg.solve(gram, rhs)
    return np.r_[head, delta - head.sum()], warnings


def kernel_shap_values(value_fn: Callable[[np.ndarray], np.ndarray], m: int, num_coalitions: int, seed: int = 0) -> tuple[np.ndarray, float, bool]:
    """KernelSHAP on an abstract game.

    ``value_fn`` maps a ``(N, M)`` 0/1 coalition matrix to ``N`` values.
    Returns ``(phi, base_value, exact)``.
    """
    z, exact = sample_coalitions(m, num_coalitions, seed)
    ends = np.vstack([np.zeros((1, m), dtype=np.uint8), np.ones((1, m), dtype=np.uint8)])
    base, full = np.asarray(value_fn(ends), dtype=np.float64)
    phi, _ = solve_kernel_shap(z, value_fn(z), float(base), float(full))
    return phi, float(base), exact


@dataclass(frozen=True)
class ShapConfig:
    num_coalitions: int = 2000
    baseline: str = "mean"
    seed: int = 0
    num_segments: int = 50
    batch_size: int = 256

    def __post_init__(self):
        if self.baseline not in ("mean", "zero"):
            raise DataError(f"baseline must be 'mean' or 'zero', got {self.baseline!r}")


@dataclass
class ShapCoalitions:
    """Coalitions with black-box values; row 0 is empty, row 1 is full."""

    z: np.ndarray
    values: np.ndarray
    exact: bool


@dataclass
class ShapExplanation:
    phi: np.ndarray
    base_value: float
    full_value: float
    heatmap: np.ndarray
    superpixels: SuperpixelMap
    class_index: int
    num_coalitions: int
    seed: int
    exact: bool
    warnings: list[str] = field(default_factory=list)


def evaluate_coalitions(net: Network, x: np.ndarray, sp: SuperpixelMap, cfg: ShapConfig) -> ShapCoalitions:
    """Class probabilities for the empty, full and sampled coalitions."""
    m = sp.n_segments
    if cfg.num_coalitions < m + 2:
        raise DataError(f"num_coalitions ({cfg.num_coalitions}) must be >= M+2 = {m + 2}")
    z, exact = sample_coalitions(m, cfg.num_coalitions, cfg.seed)
    z = np.vstack([np.zeros((1, m), dtype=np.uint8), np.ones((1, m), dtype=np.uint8), z])
    values = evaluate_black_box(network_black_box(net), x, sp, z, baseline_image(x, cfg.baseline), cfg.batch_size)
    return ShapCoalitions(z, values, exact)


def explain_from_coalitions(coal: ShapCoalitions, sp: SuperpixelMap, class_index: int, cfg: ShapConfig) -> ShapExplanation:
    v = coal.values[:, class_index]
    phi, warnings = solve_kernel_shap(coal.z[2:], v[2:], float(v[0]), float(v[1]))
    if not np.all(np.isfinite(phi)):
        raise NumericError("KernelSHAP produced non-finite attributions")
    return ShapExplanation(
        phi=phi,
        base_value=float(v[0]),
        full_value=float(v[1]),
        heatmap=sp.paint(phi),
        superpixels=sp,
        class_index=class_index,
        num_coalitions=len(coal.z) - 2,
        seed=cfg.seed,
        exact=coal.exact,
        warnings=warnings,
    )


def kernel_shap(net: Network, x: np.ndarray, class_index: int, sp: SuperpixelMap | None = None, cfg: ShapConfig = ShapConfig()) -> ShapExplanation:
    """KernelSHAP attribution of the class probability to each superpixel.

    ``base_value`` is the prediction with every segment replaced by the
    baseline; ``base_value + phi.sum()`` equals the prediction on ``x``.
    """
    if not 0 <= class_index < net.num_classes:
        raise ShapeError(f"class_index {class_index} out of range for {net.num_classes} classes")
    x = as_tensor(x)
    if sp is None:
        sp = segment_superpixels(x, cfg.num_segments, cfg.seed)
    return explain_from_coalitions(evaluate_coalitions(net, x, sp, cfg), sp, class_index, cfg)
