"""On-disk dataset layout.

::

    images/{id}.pgm          8-bit gray image
    masks/{id}_c{k}.pgm      expert mask for class k (empty when absent)
    masks/{id}_union.pgm     union over classes
    labels.csv               instance_id plus one 0/1 column per class
    manifest.csv             instance_id, split, image, mask, mask_c0..
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .netgraph.data import CLASS_NAMES, BlobDataset
from .segmentation import load_mask, read_pgm, write_pgm

SPLITS = ("train", "test", "all")


def instance_id(i: int) -> str:
    return f"img{i:05d}"


def mask_name(iid: str, class_index: int) -> str:
    return f"{iid}_c{class_index}.pgm"


def write_dataset(ds: BlobDataset, out_dir: str | Path, test_count: int) -> list[dict]:
    """Write ``ds``; the last ``test_count`` instances form the test split."""
    if not 0 <= test_count <= len(ds):
        raise DataError(f"test count {test_count} outside [0, {len(ds)}]")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    k = ds.labels.shape[1]
    rows = []
    for i in range(len(ds)):
        iid = instance_id(i)
        write_pgm(out / "images" / f"{iid}.pgm", ds.images_u8[i])
        for c in range(k):
            write_pgm(out / "masks" / mask_name(iid, c), ds.masks[i, c] * np.uint8(255))
        write_pgm(out / "masks" / f"{iid}_union.pgm", ds.masks[i].max(axis=0) * np.uint8(255))
        row = {
            "instance_id": iid,
            "split": "test" if i >= len(ds) - test_count else "train",
            "image": f"images/{iid}.pgm",
            "mask": f"masks/{iid}_union.pgm",
        }
        row.update({f"mask_c{c}": f"masks/{mask_name(iid, c)}" for c in range(k)})
        rows.append(row)
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["instance_id", "split", "image", "mask"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    with open(out / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", *CLASS_NAMES[:k]])
        for i in range(len(ds)):
            w.writerow([instance_id(i), *map(int, ds.labels[i])])
    return rows


@dataclass
class DataDir:
    root: Path
    manifest: list[dict]
    labels: dict[str, np.ndarray]
    class_names: list[str]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def select(self, split: str) -> list[dict]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}; expected one of {SPLITS}")
        return [r for r in self.manifest if split == "all" or r["split"] == split]

    def image(self, row: dict) -> np.ndarray:
        return read_pgm(self.root / row["image"])

    def gt_mask(self, iid: str, class_index: int):
        return load_mask(self.root / "masks" / mask_name(iid, class_index))

    def label_matrix(self, rows: list[dict]) -> np.ndarray:
        return np.array([self.labels[r["instance_id"]] for r in rows], dtype=np.int64)

    def images(self, rows: list[dict]) -> np.ndarray:
        return np.stack([self.image(r) for r in rows]) if rows else np.zeros((0, 0, 0), dtype=np.uint8)


def open_dataset(root: str | Path) -> DataDir:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"data directory {root} does not exist")
    for name in ("manifest.csv", "labels.csv"):
        if not (root / name).is_file():
            raise DataError(f"data directory {root} has no {name}")
    with open(root / "manifest.csv", newline="") as fh:
        manifest = list(csv.DictReader(fh))
    with open(root / "labels.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        labels = {row[0]: np.array([int(v) for v in row[1:]]) for row in reader}
    missing = [r["instance_id"] for r in manifest if r["instance_id"] not in labels]
    if missing:
        raise DataError(f"labels.csv lacks instances: {missing[:10]}")
    return DataDir(root, manifest, labels, header[1:])
