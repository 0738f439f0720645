"""Writing explanations to disk: raw heatmap, preview, masks, sidecars."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import numpy as np

from ..evaluation import dumps_json, fmt
from ..segmentation import DEFAULT_NORMALIZATION, Heatmap, normalize, preview_pixels, save_mask, threshold, write_pgm
from ..tensor import write_tnsr

METHODS = ("lime", "shap", "gradcam", "lrp")


def tau_tag(tau: float) -> str:
    return f"tau{fmt(tau)}"


def artifact_stem(method: str, class_index: int) -> str:
    return f"{method}_c{class_index}"


def vector_csv(header: Sequence[str], values: np.ndarray) -> str:
    """Two-column CSV of ``(index, value)`` rows, values at 9 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, v in enumerate(np.asarray(values, dtype=np.float64)):
        w.writerow([i, fmt(float(v))])
    return buf.getvalue()


def export_heatmap(
    out_dir: str | Path,
    method: str,
    class_index: int,
    scores: np.ndarray,
    taus: Sequence[float],
    metadata: dict,
    vectors: dict[str, tuple[Sequence[str], np.ndarray]] | None = None,
) -> dict:
    """Write one (instance, class, method) explanation.

    Files: ``{stem}.tnsr`` (raw scores), ``{stem}.pgm`` (min-max preview),
    ``{stem}_tau{t}.pgm`` per threshold, ``{stem}.json`` metadata and one
    CSV per entry of ``vectors``. Returns the metadata as written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = artifact_stem(method, class_index)
    raw = Heatmap(scores, method, class_index)
    mode = DEFAULT_NORMALIZATION[method]
    norm = normalize(raw, mode)
    write_tnsr(out / f"{stem}.tnsr", raw.scores)
    write_pgm(out / f"{stem}.pgm", preview_pixels(raw.scores))
    masks = {}
    for tau in taus:
        name = f"{stem}_{tau_tag(tau)}.pgm"
        save_mask(threshold(norm, tau), out / name)
        masks[fmt(tau)] = name
    for suffix, (header, values) in (vectors or {}).items():
        (out / f"{stem}_{suffix}.csv").write_text(vector_csv(header, values))
    meta = {
        "method": method,
        "class_index": class_index,
        "normalization": mode,
        "degenerate": norm.degenerate,
        "finite": True,
        "heatmap": f"{stem}.tnsr",
        "preview": f"{stem}.pgm",
        "masks": masks,
        "score_min": float(raw.scores.min()),
        "score_max": float(raw.scores.max()),
        **metadata,
    }
    (out / f"{stem}.json").write_text(dumps_json(meta))
    return meta
