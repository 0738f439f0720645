"""Per-instance explanation jobs shared by the CLI's serial and parallel paths.

A job computes every requested (method, class) heatmap for one instance and
writes them under ``out/{instance_id}/``. LIME samples and SHAP coalitions
are drawn once per instance and reused across classes. Each instance's seed
is derived from the run seed and the instance's position in the manifest,
so results do not depend on which worker handles it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import HeatlensError, NumericError
from .explain.export import export_heatmap
from .explain.gradcam import grad_cam
from .explain.lime import LimeConfig, fit_surrogate, network_black_box, sample_neighborhood
from .explain.lrp import lrp
from .explain.shap import ShapConfig, evaluate_coalitions, explain_from_coalitions
from .explain.superpixels import segment_superpixels
from .netgraph.data import to_model_input
from .netgraph.io import load_model
from .netgraph.network import Network
from .tensor import write_tnsr

INDEX_COLUMNS = ("instance_id", "class_index", "method", "heatmap", "degenerate", "status")


@dataclass(frozen=True)
class ExplainSettings:
    methods: tuple[str, ...]
    taus: tuple[float, ...]
    seed: int = 0
    samples: int = 1000
    coalitions: int = 2000
    segments: int = 50
    epsilon: float = 1e-6
    target_layer: str = "last-conv"
    dump_layers: bool = False


@dataclass(frozen=True)
class Job:
    ordinal: int
    instance_id: str
    image: np.ndarray  # uint8 (H, W)
    classes: tuple[int, ...]


def instance_seed(seed: int, ordinal: int) -> int:
    return int(np.random.SeedSequence([seed, ordinal]).generate_state(1)[0])


def _run(method, class_index, out, fn):
    """Call ``fn`` and turn a library error into an index row instead of aborting the batch."""
    try:
        meta = fn()
        return {"class_index": class_index, "method": method, "heatmap": meta["heatmap"], "degenerate": int(meta["degenerate"]), "status": "ok"}
    except HeatlensError as exc:
        kind = "numeric" if isinstance(exc, NumericError) else "data"
        (out / f"{method}_c{class_index}.error.txt").write_text(f"{type(exc).__name__}: {exc}\n")
        return {"class_index": class_index, "method": method, "heatmap": "", "degenerate": "", "status": f"error:{kind}"}


def explain_instance(net: Network, job: Job, settings: ExplainSettings, out_dir: str | Path) -> list[dict]:
    out = Path(out_dir) / job.instance_id
    out.mkdir(parents=True, exist_ok=True)
    seed = instance_seed(settings.seed, job.ordinal)
    x = to_model_input(job.image, net.input_shape[0])
    taus = settings.taus
    rows = []
    common = {"instance_id": job.instance_id, "seed": seed, "run_seed": settings.seed}

    sp = None
    if {"lime", "shap"} & set(settings.methods):
        sp = segment_superpixels(x, settings.segments, seed)
        write_tnsr(out / "superpixels.tnsr", sp.labels.astype(np.float64))

    if "lime" in settings.methods:
        cfg = LimeConfig(num_samples=max(settings.samples, sp.n_segments), seed=seed, num_segments=settings.segments)
        samples = sample_neighborhood(x, sp, cfg, network_black_box(net))
        for c in job.classes:

            def lime_one(c=c):
                e = fit_surrogate(samples, cfg, sp, c)
                meta = {
                    **common,
                    "num_samples": cfg.num_samples,
                    "kernel_width": cfg.kernel_width,
                    "lambda": e.lam,
                    "intercept": e.intercept,
                    "r2": e.r2,
                    "num_segments": sp.n_segments,
                    "surrogate": cfg.surrogate_family,
                    "warnings": e.warnings,
                }
                vec = {"coef": (("superpixel_id", "coefficient"), e.coefficients)}
                return export_heatmap(out, "lime", c, e.heatmap, taus, meta, vec)

            rows.append(_run("lime", c, out, lime_one))

    if "shap" in settings.methods:
        cfg = ShapConfig(num_coalitions=max(settings.coalitions, sp.n_segments + 2), seed=seed, num_segments=settings.segments)
        coal = evaluate_coalitions(net, x, sp, cfg)
        for c in job.classes:

            def shap_one(c=c):
                e = explain_from_coalitions(coal, sp, c, cfg)
                meta = {
                    **common,
                    "base_value": e.base_value,
                    "full_value": e.full_value,
                    "num_coalitions": e.num_coalitions,
                    "exact": e.exact,
                    "num_segments": sp.n_segments,
                    "warnings": e.warnings,
                }
                vec = {"phi": (("superpixel_id", "phi"), e.phi)}
                return export_heatmap(out, "shap", c, e.heatmap, taus, meta, vec)

            rows.append(_run("shap", c, out, shap_one))

    if "gradcam" in settings.methods:
        for c in job.classes:

            def gradcam_one(c=c):
                g = grad_cam(net, x, c, settings.target_layer)
                meta = {**common, "target_layer": g.target_layer, "conv_layer": g.conv_layer}
                vec = {"alpha": (("channel", "alpha"), g.alpha)}
                return export_heatmap(out, "gradcam", c, g.heatmap, taus, meta, vec)

            rows.append(_run("gradcam", c, out, gradcam_one))

    if "lrp" in settings.methods:
        for c in job.classes:

            def lrp_one(c=c):
                r = lrp(net, x, c, settings.epsilon)
                if settings.dump_layers:
                    for i, rel in enumerate(r.layer_relevance):
                        write_tnsr(out / f"lrp_c{c}.layer{i:02d}.tnsr", rel)
                meta = {
                    **common,
                    "epsilon": r.epsilon,
                    "logit": r.logit,
                    "input_relevance_sum": float(r.input_relevance.sum()),
                    "leakage": r.leakage,
                    "total_leakage": r.total_leakage,
                }
                return export_heatmap(out, "lrp", c, r.heatmap, taus, meta)

            rows.append(_run("lrp", c, out, lrp_one))

    return [{"instance_id": job.instance_id, **row} for row in rows]


# process-pool plumbing: each worker loads the model once

_WORKER_NET: Network | None = None


def init_worker(model_path: str) -> None:
    global _WORKER_NET
    _WORKER_NET = load_model(model_path)


def worker_explain(job: Job, settings: ExplainSettings, out_dir: str) -> list[dict]:
    return explain_instance(_WORKER_NET, job, settings, out_dir)


def sort_index(rows: Sequence[dict]) -> list[dict]:
    order = {"lime": 0, "shap": 1, "gradcam": 2, "lrp": 3}
    return sorted(rows, key=lambda r: (r["instance_id"], int(r["class_index"]), order.get(r["method"], 9)))
