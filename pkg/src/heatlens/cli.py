"""``heatlens`` command line: gen-data, train, predict, explain, evaluate.

Exit codes: 0 success, 1 usage error, 2 data or contract error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .datadir import open_dataset, write_dataset
from .errors import DataError, HeatlensError, NumericError
from .evaluation import aggregate, dumps_json, fmt, prediction_metrics, score_pair, write_report
from .explain.export import METHODS, tau_tag
from .netgraph.build import build_network, toy_cnn_architecture
from .netgraph.data import CLASS_NAMES, generate_blob_dataset, to_model_input
from .netgraph.io import FORMAT_VERSION, load_model, save_model
from .netgraph.network import predict_proba
from .netgraph.train import TrainConfig, train
from .pipeline import INDEX_COLUMNS, ExplainSettings, Job, explain_instance, init_worker, sort_index, worker_explain
from .segmentation import DEFAULT_NORMALIZATION, Heatmap, load_mask, normalize, threshold
from .tensor import read_tnsr

log = logging.getLogger("heatlens")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# flag parsing helpers


def parse_methods(text: str) -> tuple[str, ...]:
    names = [m.strip().lower() for m in text.split(",") if m.strip()]
    unknown = [m for m in names if m not in METHODS]
    if unknown or not names:
        raise UsageError(f"unknown method(s) {unknown or [text]}; supported: {', '.join(METHODS)}")
    return tuple(m for m in METHODS if m in names)


def parse_taus(tau: float, grid: str | None) -> tuple[float, ...]:
    if grid is None:
        values = [tau]
    elif re.fullmatch(r"[^:]+:[^:]+:[^:]+", grid):
        start, stop, step = (float(v) for v in grid.split(":"))
        if step <= 0:
            raise UsageError(f"tau-grid step must be > 0, got {step}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 12) for i in range(count)]
    else:
        try:
            values = [float(v) for v in grid.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"cannot parse --tau-grid {grid!r}; use 'a,b,c' or 'start:stop:step'") from None
    bad = [v for v in values if not 0.0 <= v <= 1.0]
    if bad or not values:
        raise UsageError(f"tau values must lie in [0, 1], got {bad or values}")
    return tuple(sorted(set(values)))


def parse_classes(text: str, num_classes: int) -> list[int] | str:
    if text in ("positive", "all"):
        return text
    try:
        classes = sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise UsageError(f"--classes takes 'positive', 'all' or comma-separated indices, got {text!r}") from None
    bad = [c for c in classes if not 0 <= c < num_classes]
    if bad:
        raise DataError(f"class index {bad} out of range: model has {num_classes} classes (0..{num_classes - 1})")
    return classes


def parse_channels(text: str) -> tuple[int, ...]:
    try:
        ch = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--channels takes comma-separated integers, got {text!r}") from None
    if not ch or min(ch) < 1:
        raise UsageError(f"--channels must be positive, got {text!r}")
    return ch


def write_provenance(out: Path, args: argparse.Namespace, seed, extra: dict | None = None) -> None:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {
        "command": args.command,
        "flags": flags,
        "seed": seed,
        "package_version": __version__,
        "format_versions": {"model_manifest": FORMAT_VERSION, "tnsr": 1, "pgm": "P5 maxval 255", "iou_records_csv": 1},
        **(extra or {}),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "provenance.json").write_text(dumps_json(doc))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    test = args.test_count if args.test_count is not None else args.n // 5
    ds = generate_blob_dataset(args.n, args.size, args.seed, blob_prob=args.blob_prob)
    out = Path(args.out)
    write_dataset(ds, out, test)
    write_provenance(out, args, args.seed, {"instances": args.n, "test_count": test, "class_names": list(CLASS_NAMES)})
    log.info("wrote %d instances to %s", args.n, out)
    return EXIT_OK


def cmd_train(args) -> int:
    data = open_dataset(args.data)
    rows = data.select("train")
    if not rows:
        raise DataError(f"{args.data} has no training instances")
    images = to_model_input(data.images(rows))
    labels = data.label_matrix(rows)
    arch = toy_cnn_architecture(parse_channels(args.channels))
    net = build_network(arch, images.shape[1:], data.num_classes, seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.learning_rate, seed=args.seed)
    net, history = train(net, images, labels, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(net, out / "model.json")
    sidecar = {
        "seed": args.seed,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "optimizer": "adam",
        "final_loss": history[-1] if history else None,
        "loss_history": history,
        "train_instances": len(rows),
        "architecture": arch,
        "class_names": data.class_names,
    }
    (out / "train.json").write_text(dumps_json(sidecar))
    write_provenance(out, args, args.seed)
    log.info("final loss %s; model written to %s", fmt(history[-1]) if history else "n/a", out / "model.json")
    return EXIT_OK


def _load(args):
    net = load_model(args.model)
    data = open_dataset(args.data)
    if data.num_classes != net.num_classes:
        raise DataError(f"model has {net.num_classes} classes but {args.data} has {data.num_classes}")
    return net, data


def _predict_rows(net, data, rows):
    images = to_model_input(data.images(rows), net.input_shape[0])
    return predict_proba(net, images)


def cmd_predict(args) -> int:
    net, data = _load(args)
    rows = data.select(args.split)
    if not rows:
        raise DataError(f"split {args.split!r} is empty")
    probs = _predict_rows(net, data, rows)
    labels = data.label_matrix(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["instance_id"] + [f"p_{n}" for n in data.class_names] + [f"label_{n}" for n in data.class_names]
    write_csv(out / "predictions.csv", header, [[r["instance_id"], *map(fmt, p), *map(int, y)] for r, p, y in zip(rows, probs, labels)])
    metrics = prediction_metrics(probs, labels, data.class_names)
    (out / "metrics.json").write_text(dumps_json(metrics))
    write_provenance(out, args, None)
    for name, m in metrics["per_class"].items():
        log.info("%s: AUROC %.4f AUPRC %.4f", name, m["auroc"], m["auprc"])
    return EXIT_OK


def cmd_explain(args) -> int:
    methods = parse_methods(args.methods)
    taus = parse_taus(args.tau, args.tau_grid)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    net, data = _load(args)
    classes = parse_classes(args.classes, net.num_classes)
    positions = {r["instance_id"]: i for i, r in enumerate(data.manifest)}
    rows = data.select(args.split)
    if args.instances is not None:
        rows = rows[: args.instances]
    if not rows:
        raise DataError(f"no instances to explain in split {args.split!r}")
    jobs = []
    for r in rows:
        iid = r["instance_id"]
        if classes == "all":
            cls = tuple(range(net.num_classes))
        elif classes == "positive":
            cls = tuple(int(c) for c in np.flatnonzero(data.labels[iid]))
        else:
            cls = tuple(classes)
        if cls:
            jobs.append(Job(positions[iid], iid, data.image(r), cls))
    settings = ExplainSettings(
        methods=methods,
        taus=taus,
        seed=args.seed,
        samples=args.samples,
        coalitions=args.coalitions,
        segments=args.segments,
        epsilon=args.epsilon,
        target_layer=args.target_layer,
        dump_layers=args.dump_layers,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    if args.workers == 1:
        for job in jobs:
            index += explain_instance(net, job, settings, out)
    else:
        with ProcessPoolExecutor(args.workers, initializer=init_worker, initargs=(str(args.model),)) as pool:
            for part in pool.map(worker_explain, jobs, [settings] * len(jobs), [str(out)] * len(jobs)):
                index += part
    index = sort_index(index)
    write_csv(out / "index.csv", INDEX_COLUMNS, [[r[c] for c in INDEX_COLUMNS] for r in index])
    write_provenance(out, args, args.seed, {"methods": list(methods), "taus": list(taus), "instances": len(jobs)})
    failed = [r for r in index if r["status"] != "ok"]
    for r in failed:
        log.error("%s class %s %s: %s", r["instance_id"], r["class_index"], r["method"], r["status"])
    if failed:
        return EXIT_NUMERIC if any(r["status"] == "error:numeric" for r in failed) else EXIT_DATA
    log.info("wrote %d heatmaps for %d instances to %s", len(index), len(jobs), out)
    return EXIT_OK


_MASK_NAME = re.compile(r"(?P<iid>.+)_c(?P<cls>\d+)(?:_(?P<method>[A-Za-z0-9-]+))?\.pgm")


def _predicted_items(pred: Path):
    """``(instance_id, class_index, method, loader)`` for heatmaps or masks under ``pred``.

    An explain output directory (with index.csv) contributes heatmaps that
    are normalised and thresholded per tau. Any other directory is read as
    predicted masks named ``{id}_c{k}.pgm`` or ``{id}_c{k}_{method}.pgm``.
    """
    if not pred.is_dir():
        raise DataError(f"prediction directory {pred} does not exist")
    items = []
    if (pred / "index.csv").is_file():
        with open(pred / "index.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                if row["status"] != "ok":
                    continue
                path = pred / row["instance_id"] / row["heatmap"]
                method = row["method"]

                def heat(tau, path=path, method=method, c=int(row["class_index"])):
                    h = normalize(Heatmap(read_tnsr(path), method, c), DEFAULT_NORMALIZATION[method])
                    return threshold(h, tau)

                items.append((row["instance_id"], int(row["class_index"]), method, heat))
        return items
    for path in sorted(pred.glob("*.pgm")):
        m = _MASK_NAME.fullmatch(path.name)
        if not m:
            continue
        mask = load_mask(path, "predicted")
        items.append((m["iid"], int(m["cls"]), m["method"] or "mask", lambda tau, mask=mask: mask))
    return items


def cmd_evaluate(args) -> int:
    taus = parse_taus(args.tau, args.tau_grid)
    data = open_dataset(args.data)
    items = _predicted_items(Path(args.pred))
    if not items:
        raise DataError(f"no heatmaps or masks found under {args.pred}")
    known = set(data.labels)
    unmatched = sorted({iid for iid, *_ in items if iid not in known})
    if unmatched:
        raise DataError(f"{len(unmatched)} predicted instance id(s) have no ground truth, first 10: {unmatched[:10]}")
    bad_cls = sorted({c for _, c, *_ in items if not 0 <= c < data.num_classes})
    if bad_cls:
        raise DataError(f"class index {bad_cls} out of range for {data.num_classes} classes")

    prediction = None
    if args.model:
        net = load_model(args.model)
        rows = data.select(args.split)
        prediction = prediction_metrics(_predict_rows(net, data, rows), data.label_matrix(rows), data.class_names)

    out = Path(args.out)
    gt_cache = {}
    for tau in taus:
        records = []
        for iid, c, method, loader in items:
            if (iid, c) not in gt_cache:
                gt_cache[iid, c] = data.gt_mask(iid, c)
            records.append(score_pair(iid, c, method, tau, loader(tau), gt_cache[iid, c]))
        report = aggregate(records, prediction, data.class_names)
        stem = "iou" if len(taus) == 1 else f"iou_{tau_tag(tau)}"
        write_report(report, out, stem, {"tau": tau})
        for method, stats in report.per_method.items():
            mean = "n/a" if stats["mean"] is None else f"{stats['mean']:.4f}"
            log.info("tau %s %s: mean IoU %s over %d (degenerate %d)", fmt(tau), method, mean, stats["count"], stats["degenerate"])
    write_provenance(out, args, None, {"taus": list(taus)})
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="heatlens", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"heatlens {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="synthesise the blob dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=500, help="number of images")
    g.add_argument("--size", type=int, default=32, help="image side in pixels")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--test-count", type=int, default=None, help="held-out instances (default n/5)")
    g.add_argument("--blob-prob", type=float, default=0.5)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the toy CNN on the train split")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="directory for model.json and weights")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--learning-rate", type=float, default=1e-3)
    t.add_argument("--channels", default="8,8", help="conv widths, e.g. 8,8")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="class probabilities and AUROC/AUPRC")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--split", default="test")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("explain", help="heatmaps, previews and masks per instance")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--methods", default=",".join(METHODS))
    e.add_argument("--classes", default="positive", help="'positive', 'all' or indices like 0,2")
    e.add_argument("--split", default="test")
    e.add_argument("--instances", type=int, default=None, help="explain only the first N instances")
    e.add_argument("--tau", type=float, default=0.5)
    e.add_argument("--tau-grid", default=None, help="'0.1,0.5' or 'start:stop:step'")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--epsilon", type=float, default=1e-6, help="LRP stabiliser")
    e.add_argument("--samples", type=int, default=1000, help="LIME perturbations")
    e.add_argument("--coalitions", type=int, default=2000, help="KernelSHAP coalitions")
    e.add_argument("--segments", type=int, default=50, help="target superpixel count")
    e.add_argument("--target-layer", default="last-conv", help="Grad-CAM layer index or 'last-conv'")
    e.add_argument("--dump-layers", action="store_true", help="write per-layer LRP relevance")
    e.set_defaults(func=cmd_explain)

    v = sub.add_parser("evaluate", help="IoU against expert masks")
    v.add_argument("--pred", required=True, help="explain output or directory of predicted masks")
    v.add_argument("--data", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--tau", type=float, default=0.5)
    v.add_argument("--tau-grid", default=None)
    v.add_argument("--model", default=None, help="also report AUROC/AUPRC")
    v.add_argument("--split", default="test")
    v.add_argument("--workers", type=int, default=1, help="accepted for symmetry; evaluation is serial")
    v.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HeatlensError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
