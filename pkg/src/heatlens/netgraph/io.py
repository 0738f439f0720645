"""Model manifests: a JSON layer list pointing at TNSR weight files."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import DataError, FormatError, ShapeError
from ..tensor import read_tnsr, write_tnsr
from .layers import LAYER_KINDS
from .network import Network

FORMAT_VERSION = 1


def save_model(net: Network, path: str | Path) -> Path:
    """Write ``net`` as a manifest at ``path`` plus one TNSR file per parameter.

    Weight files live next to the manifest and are referenced by relative
    path. Output bytes depend only on the network.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    layers = []
    for i, layer in enumerate(net.layers):
        entry = {"kind": layer.kind, "hyper": layer.hyper(), "params": {}}
        for name, arr in layer.params().items():
            fname = f"{stem}.layer{i:02d}.{name}.tnsr"
            write_tnsr(path.parent / fname, arr)
            entry["params"][name] = fname
        layers.append(entry)
    manifest = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "num_classes": net.num_classes,
        "layers": layers,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_model(manifest_path: str | Path) -> Network:
    path = Path(manifest_path)
    if not path.is_file():
        raise DataError(f"model manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"model manifest {path} is not valid JSON: {exc.msg}", exc.pos) from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported model format_version {version!r}; expected {FORMAT_VERSION}")
    for key in ("input_shape", "num_classes", "layers"):
        if key not in manifest:
            raise DataError(f"model manifest {path} lacks '{key}'")
    layers = []
    for i, entry in enumerate(manifest["layers"]):
        kind = entry.get("kind")
        cls = LAYER_KINDS.get(kind)
        if cls is None:
            raise DataError(f"layer {i}: unknown kind {kind!r}; supported kinds: {', '.join(LAYER_KINDS)}")
        params = {}
        for name, rel in entry.get("params", {}).items():
            wpath = path.parent / rel
            if not wpath.is_file():
                raise DataError(f"layer {i} ({kind}): weight file {wpath} not found")
            params[name] = read_tnsr(wpath)
        try:
            layers.append(cls(**params, **entry.get("hyper", {})))
        except TypeError as exc:
            raise DataError(f"layer {i} ({kind}): bad parameters: {exc}") from None
    try:
        return Network(tuple(layers), tuple(manifest["input_shape"]), int(manifest["num_classes"]))
    except ShapeError as exc:
        raise ShapeError(f"model {path}: {exc}") from None
