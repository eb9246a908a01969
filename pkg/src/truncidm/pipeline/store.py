"""Model container: a directory holding ``manifest.json`` and one ``.fmap``
payload per tensor (float64, so round-trips are bit-exact)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError, VersionError
from ..fmap import load_fmap, save_fmap
from ..numcore import Tensor
from .config import PipelineConfig
from .model import ModelParams
from .norm import NormStats

CONTAINER_VERSION = 1


def _fname(name):
    return f"{name}.fmap"


def save_model(model: ModelParams, path):
    root = Path(path)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    arrays = dict(model.arrays())
    arrays["norm.mu"] = model.norm.mu
    arrays["norm.sigma"] = model.norm.sigma
    entries = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype=np.float64)
        save_fmap(arr, root / "tensors" / _fname(name), dtype=np.float64)
        entries.append({"name": name, "file": f"tensors/{_fname(name)}", "dims": list(arr.shape)})
    manifest = {
        "format": "truncidm-model",
        "version": CONTAINER_VERSION,
        "config": model.config.to_dict(),
        "dim_kinds": list(model.dim_kinds),
        "loss_curve": [float(x) for x in model.loss_curve],
        "tensors": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def load_model(path) -> ModelParams:
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise FormatError(f"{root}: no manifest.json")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{mpath}: invalid JSON ({e})") from None
    version = manifest.get("version")
    if version != CONTAINER_VERSION:
        raise VersionError(f"{mpath}: container version {version!r}, expected {CONTAINER_VERSION}")
    for key in ("config", "tensors"):
        if key not in manifest:
            raise FormatError(f"{mpath}: missing field {key!r}")
    cfg = PipelineConfig.from_dict(manifest["config"])
    arrays = {}
    for entry in manifest["tensors"]:
        name = entry["name"]
        f = root / entry["file"]
        if not f.is_file():
            raise FormatError(f"{root}: tensor {name!r} listed in manifest but {entry['file']} is missing")
        arr = load_fmap(f)
        if list(arr.shape) != list(entry["dims"]):
            raise FormatError(f"{root}: tensor {name!r} has dims {list(arr.shape)}, manifest says {entry['dims']}")
        arrays[name] = arr.astype(np.float64, copy=False)
    for key in ("norm.mu", "norm.sigma"):
        if key not in arrays:
            raise FormatError(f"{root}: manifest lacks tensor {key!r}")
    norm = NormStats(arrays.pop("norm.mu"), arrays.pop("norm.sigma"))
    from .model import init_params
    expected = init_params(cfg, norm.dim, 0)
    missing = sorted(set(expected) - set(arrays))
    if missing:
        raise FormatError(f"{root}: manifest lacks tensors {missing}")
    for name, ref in expected.items():
        if arrays[name].shape != np.shape(ref):
            raise FormatError(f"{root}: tensor {name!r} has dims {arrays[name].shape}, model expects {np.shape(ref)}")
    tensors = {k: Tensor(v, name=k) for k, v in arrays.items()}
    return ModelParams(tensors, norm, cfg, list(manifest.get("dim_kinds", [])),
                       list(manifest.get("loss_curve", [])))
