"""Heatmap normalisation, thresholding into masks, and PGM (P5) file IO."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, NumericError, ShapeError
from .tensor import as_tensor

NORMALIZE_MODES = ("minmax", "positive-only")

#: default normalisation per method: signed perturbation/relevance scores keep positives only
DEFAULT_NORMALIZATION = {
    "gradcam": "minmax",
    "lime": "positive-only",
    "shap": "positive-only",
    "lrp": "positive-only",
}


@dataclass(frozen=True)
class Heatmap:
    scores: np.ndarray
    method: str = ""
    class_index: int = -1
    normalization: str = "raw"
    degenerate: bool = False

    def __post_init__(self):
        s = as_tensor(self.scores)
        if s.ndim != 2:
            raise ShapeError(f"heatmap scores must be 2-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise NumericError(f"{self.method or 'heatmap'} scores contain non-finite values")
        object.__setattr__(self, "scores", s)


@dataclass(frozen=True)
class SegmentationMask:
    mask: np.ndarray
    source: str = "predicted"

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {m.shape}")
        if not np.all((m == 0) | (m == 1)):
            raise DataError("mask values must be 0 or 1")
        object.__setattr__(self, "mask", m.astype(np.uint8))

    @property
    def shape(self):
        return self.mask.shape

    def __eq__(self, other):
        return isinstance(other, SegmentationMask) and np.array_equal(self.mask, other.mask)


def _minmax(s: np.ndarray) -> tuple[np.ndarray, bool]:
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.zeros_like(s), True
    return (s - lo) / (hi - lo), False


def normalize(h: Heatmap, mode: str = "minmax") -> Heatmap:
    """Rescale scores into [0, 1].

    ``minmax`` is an affine rescale of the full range. ``positive-only``
    clamps negative scores to zero first, so only evidence for the class
    survives. A constant input maps to all zeros and is flagged degenerate.
    """
    if mode == "minmax":
        scores, degenerate = _minmax(h.scores)
    elif mode == "positive-only":
        scores, degenerate = _minmax(np.maximum(h.scores, 0.0))
    else:
        raise DataError(f"unknown normalization {mode!r}; expected one of {NORMALIZE_MODES}")
    return replace(h, scores=scores, normalization=mode, degenerate=degenerate)


def threshold(h: Heatmap, tau: float = 0.5) -> SegmentationMask:
    """Mask of pixels whose normalised score is at least ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise DataError(f"tau must lie in [0, 1], got {tau}")
    if h.normalization == "raw":
        raise DataError("threshold expects a normalized heatmap; call normalize() first")
    return SegmentationMask((h.scores >= tau).astype(np.uint8))


# ---------------------------------------------------------------------------
# PGM


def pgm_bytes(pixels: np.ndarray) -> bytes:
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ShapeError(f"PGM needs a 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise DataError(f"PGM pixels must be uint8, got {arr.dtype}")
    h, w = arr.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes(order="C")


def _header_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(buf):
        c = buf[pos : pos + 1]
        if c == b"#":
            nl = buf.find(b"\n", pos)
            if nl < 0:
                raise FormatError("unterminated comment in PGM header", pos)
            pos = nl + 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header", start)
    return buf[start:pos], pos


def pgm_from_bytes(buf: bytes) -> np.ndarray:
    """Parse an 8-bit binary PGM into a ``uint8`` array."""
    if buf[:2] != b"P5":
        raise FormatError(f"bad PGM magic {buf[:2]!r}, expected b'P5'", 0)
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        start = pos
        tok, pos = _header_token(buf, pos)
        if not tok.isdigit():
            raise FormatError(f"PGM {name} {tok!r} is not a positive integer", start)
        fields.append(int(tok))
    w, h, maxval = fields
    if w < 1 or h < 1:
        raise FormatError(f"PGM size {w}x{h} must be positive", 2)
    if maxval != 255:
        raise FormatError(f"only 8-bit PGM (maxval 255) is supported, got {maxval}", pos)
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after PGM maxval", pos)
    pos += 1
    need = w * h
    if len(buf) - pos < need:
        raise FormatError(f"truncated PGM pixel data: need {need} bytes, have {len(buf) - pos}", len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).reshape(h, w).copy()


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    Path(path).write_bytes(pgm_bytes(pixels))


def read_pgm(path: str | Path) -> np.ndarray:
    return pgm_from_bytes(Path(path).read_bytes())


def save_mask(mask: SegmentationMask, path: str | Path) -> None:
    write_pgm(path, mask.mask * np.uint8(255))


def load_mask(path: str | Path, source: str = "ground-truth") -> SegmentationMask:
    """Read a PGM mask; pixels >= 128 are foreground."""
    return SegmentationMask((read_pgm(path) >= 128).astype(np.uint8), source)


def preview_pixels(scores: np.ndarray) -> np.ndarray:
    """Min-max normalised 8-bit rendering of a score map (constant maps render black)."""
    norm, _ = _minmax(as_tensor(scores))
    return np.rint(norm * 255.0).astype(np.uint8)
