"""Dense float64 tensors and the numeric kernels the rest of the package uses.

A tensor is a C-contiguous ``numpy.ndarray`` of dtype float64, laid out
row-major with images in channels-first (C, H, W) order. Contractions go
through ``np.einsum`` without path optimisation rather than BLAS: einsum's
per-element accumulation order does not depend on the batch extent, so a
sample predicted alone and inside a batch of 1000 gives the same bits.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, ShapeError

TNSR_MAGIC = b"TNSR\x00\x00\x00\x01"


def as_tensor(values, shape: Sequence[int] | None = None) -> np.ndarray:
    """Return ``values`` as a contiguous float64 array, optionally reshaped."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    return arr


def flat_index(shape: Sequence[int], index: Sequence[int]) -> int:
    """Row-major flat offset of a multi-index."""
    return int(np.ravel_multi_index(tuple(index), tuple(shape)))


def multi_index(shape: Sequence[int], flat: int) -> tuple[int, ...]:
    """Inverse of :func:`flat_index`."""
    return tuple(int(i) for i in np.unravel_index(flat, tuple(shape)))


# ---------------------------------------------------------------------------
# convolution


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _check_conv(x_shape, kernels_shape, bias_shape, stride, pad):
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    if len(kernels_shape) != 4:
        raise ShapeError(f"conv2d kernels must be rank 4 (K,C,kh,kw), got shape {tuple(kernels_shape)}")
    c = x_shape[-3]
    if kernels_shape[1] != c:
        raise ShapeError(
            f"conv2d channel mismatch: input shape {tuple(x_shape)} has {c} channels, "
            f"kernel shape {tuple(kernels_shape)} expects {kernels_shape[1]}"
        )
    if bias_shape is not None and tuple(bias_shape) != (kernels_shape[0],):
        raise ShapeError(f"conv2d bias shape {tuple(bias_shape)} does not match {kernels_shape[0]} kernels")
    h, w = x_shape[-2:]
    kh, kw = kernels_shape[2:]
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")


def conv2d_batch(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray | None, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlation of a batch ``(N,C,H,W)`` with ``(K,C,kh,kw)`` kernels."""
    _check_conv(x.shape, kernels.shape, None if bias is None else bias.shape, stride, pad)
    n, _, h, w = x.shape
    k, _, kh, kw = kernels.shape
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    # im2col with the contraction on the contiguous last axis; einsum (not BLAS)
    # keeps every output element's summation order independent of the batch size
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, : stride * ho : stride, : stride * wo : stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, ho, wo, -1)
    out = np.einsum("nhwp,kp->nkhw", cols, kernels.reshape(k, -1))
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def conv2d_input_grad(grad_out: np.ndarray, kernels: np.ndarray, input_hw: tuple[int, int], stride: int = 1, pad: int = 0) -> np.ndarray:
    """Adjoint of :func:`conv2d_batch` with respect to its input."""
    n, _, ho, wo = grad_out.shape
    _, c, kh, kw = kernels.shape
    h, w = input_hw
    gp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            gp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += np.einsum(
                "nkhw,kc->nchw", grad_out, kernels[:, :, i, j]
            )
    return gp[:, :, pad : pad + h, pad : pad + w]


def conv2d_weight_grad(grad_out: np.ndarray, x: np.ndarray, kernel_hw: tuple[int, int], stride: int = 1, pad: int = 0) -> np.ndarray:
    """Gradient of ``sum(grad_out * conv(x, K))`` with respect to ``K``."""
    _, _, ho, wo = grad_out.shape
    kh, kw = kernel_hw
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    gk = np.zeros((grad_out.shape[1], x.shape[1], kh, kw))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            gk[:, :, i, j] = np.einsum("nkhw,nchw->kc", grad_out, patch)
    return gk


def conv2d_forward(input: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """2-D cross-correlation of one ``(C,H,W)`` image with zero padding.

    >>> conv2d_forward(np.ones((1, 3, 3)), np.full((1, 1, 1, 1), 2.0), np.zeros(1))[0, 0, 0]
    2.0
    """
    x = as_tensor(input)
    if x.ndim != 3:
        raise ShapeError(f"conv2d_forward expects a (C,H,W) input, got shape {x.shape}")
    _check_conv(x.shape, np.shape(kernels), None if bias is None else np.shape(bias), stride, pad)
    return conv2d_batch(x[None], as_tensor(kernels), as_tensor(bias), stride, pad)[0]


# ---------------------------------------------------------------------------
# dense algebra


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of ``(m,k)`` and ``(k,n)`` arrays in float64."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return np.einsum("ik,kj->ij", a, b)


def reduce(input: np.ndarray, axes: Sequence[int] | None = None, mode: str = "sum", return_indices: bool = False):
    """Reduce over ``axes`` with ``mode`` in {sum, mean, max}.

    ``axes=None`` reduces over every axis; an empty sequence returns the
    input unchanged. With ``mode="max"`` and ``return_indices=True`` the
    row-major flat index of the winner within the reduced block is returned
    as a second array.
    """
    x = as_tensor(input)
    if mode not in ("sum", "mean", "max"):
        raise ValueError(f"unknown reduce mode {mode!r}; expected sum, mean or max")
    if axes is None:
        axes = tuple(range(x.ndim))
    axes = tuple(sorted(a % x.ndim for a in axes)) if x.ndim else ()
    if len(set(axes)) != len(axes):
        raise ShapeError(f"repeated axis in {axes}")
    if not axes:
        if return_indices:
            return x.copy(), np.zeros(x.shape, dtype=np.int64)
        return x.copy()
    if mode == "sum":
        return x.sum(axis=axes)
    if mode == "mean":
        return x.mean(axis=axes)
    keep = [a for a in range(x.ndim) if a not in axes]
    moved = np.transpose(x, keep + list(axes))
    block = moved.reshape(moved.shape[: len(keep)] + (-1,))
    idx = block.argmax(axis=-1)
    vals = np.take_along_axis(block, idx[..., None], axis=-1)[..., 0]
    if return_indices:
        return vals, idx
    return vals


def _resize_axis(x: np.ndarray, out: int, axis: int) -> np.ndarray:
    n = x.shape[axis]
    if out == n:
        return x
    if n == 1:
        return np.repeat(x, out, axis=axis)
    if out == 1:
        pos = np.array([(n - 1) / 2.0])
    else:
        pos = np.arange(out) * ((n - 1) / (out - 1))
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
    t = pos - lo
    shape = [1] * x.ndim
    shape[axis] = out
    t = t.reshape(shape)
    a = np.take(x, lo, axis=axis)
    b = np.take(x, lo + 1, axis=axis)
    return a * (1.0 - t) + b * t


def bilinear_resize(input: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-D map.

    Output corners coincide with input corners, so a resize to the same
    size is the identity and every value is a convex combination of inputs.
    """
    x = as_tensor(input)
    if x.ndim != 2:
        raise ShapeError(f"bilinear_resize expects a 2-D map, got shape {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be positive, got {out_h}x{out_w}")
    return np.ascontiguousarray(_resize_axis(_resize_axis(x, out_h, 0), out_w, 1))


# ---------------------------------------------------------------------------
# TNSR file format


def tnsr_bytes(tensor: np.ndarray) -> bytes:
    arr = as_tensor(tensor)
    head = TNSR_MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype("<f8").tobytes(order="C")


def tnsr_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise FormatError("truncated TNSR magic", len(buf))
    if buf[:8] != TNSR_MAGIC:
        raise FormatError(f"bad TNSR magic {buf[:8]!r}", 0)
    if len(buf) < 12:
        raise FormatError("truncated TNSR rank", len(buf))
    (rank,) = struct.unpack_from("<I", buf, 8)
    end = 12 + 4 * rank
    if len(buf) < end:
        raise FormatError(f"truncated TNSR extents (rank {rank})", len(buf))
    shape = struct.unpack_from(f"<{rank}I", buf, 12)
    count = int(np.prod(shape)) if rank else 1
    if len(buf) != end + 8 * count:
        raise FormatError(f"TNSR payload holds {len(buf) - end} bytes, shape {shape} needs {8 * count}", min(len(buf), end + 8 * count))
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=end)
    return data.astype(np.float64).reshape(shape)


def write_tnsr(path: str | Path, tensor: np.ndarray) -> None:
    Path(path).write_bytes(tnsr_bytes(tensor))


def read_tnsr(path: str | Path) -> np.ndarray:
    return tnsr_from_bytes(Path(path).read_bytes())
