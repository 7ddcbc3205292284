"""Binary checkpoint container shared by all modules.

Layout: one UTF-8 JSON header line (format version, optional model config,
tensor manifest, free-form metadata) terminated by a newline, followed
immediately by the payload: the manifest's tensors as little-endian float64
bytes, concatenated in manifest order. Fixed endianness keeps containers
portable; save, load and save again is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .fisher import FisherVector
from .model import ModelConfig, ModelParams
from .tensor import Tensor

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: ModelConfig | None = None
    meta: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, path):
    manifest = []
    blobs = []
    offset = 0
    for name, arr in ckpt.tensors.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({
            "name": name,
            "shape": list(arr.shape),
            "byte_offset": offset,
            "byte_length": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": ckpt.config.to_dict() if ckpt.config is not None else None,
        "manifest": manifest,
        "meta": ckpt.meta,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        f.write(b"\n")
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise InvalidInputError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InvalidInputError(f"{path}: corrupt header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise InvalidInputError(f"{path}: unsupported format_version {header.get('format_version')}")
    payload = raw[nl + 1:]

    expected = 0
    for entry in header["manifest"]:
        if entry["byte_offset"] != expected:
            raise InvalidInputError(f"{path}: manifest offsets overlap or leave gaps at {entry['name']}")
        expected += entry["byte_length"]
    if expected != len(payload):
        raise InvalidInputError(f"{path}: payload length {len(payload)} != manifest total {expected}")

    tensors: dict[str, np.ndarray] = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        count = entry["byte_length"] // 8
        if int(np.prod(shape)) != count:
            raise InvalidInputError(f"{path}: shape/byte_length mismatch for {entry['name']}")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["byte_offset"])
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float64)

    cfg = header.get("model_config")
    return Checkpoint(
        tensors=tensors,
        config=ModelConfig.from_dict(cfg) if cfg is not None else None,
        meta=header.get("meta", {}),
    )


def params_to_checkpoint(params: ModelParams, meta: dict | None = None) -> Checkpoint:
    if params.config is None:
        raise InvalidInputError("cannot checkpoint ModelParams without a ModelConfig")
    return Checkpoint(
        tensors={n: t.data for n, t in params.items()},
        config=params.config,
        meta=dict(meta or {}),
    )


def checkpoint_to_params(ckpt: Checkpoint) -> ModelParams:
    if ckpt.config is None:
        raise InvalidInputError("checkpoint carries no model config")
    tensors = {n: Tensor(arr.copy(), requires_grad=True) for n, arr in ckpt.tensors.items()}
    return ModelParams(tensors, config=ckpt.config)


def fisher_to_checkpoint(fv: FisherVector) -> Checkpoint:
    return Checkpoint(
        tensors={"fisher": fv.values},
        config=None,
        meta={"kind": "fisher", "task_label": fv.task_label, "n_samples": fv.n_samples},
    )


def checkpoint_to_fisher(ckpt: Checkpoint) -> FisherVector:
    if ckpt.meta.get("kind") != "fisher" or "fisher" not in ckpt.tensors:
        raise InvalidInputError("checkpoint does not contain a fisher vector")
    return FisherVector(
        values=ckpt.tensors["fisher"].copy(),
        n_samples=int(ckpt.meta["n_samples"]),
        task_label=str(ckpt.meta["task_label"]),
    )
