"""Versioned binary checkpoint container.

Layout: 8-byte magic "DCLCKPT1", uint32 header length, JSON header
(version, config hash, metadata, tensor directory), then raw little-endian
tensor bytes in directory order. Tensors are keyed by slash-separated
names ("generator/blocks.0.0.weight", "optimizer_g/state/0/exp_avg", ...).
Arbitrary nested metadata (optimizer skeletons, RNG states) is stored by
flattening every tensor leaf into the directory.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any

import numpy as np
import torch

from .errors import CheckpointError, MissingInputError

MAGIC = b"DCLCKPT1"
FORMAT_VERSION = 1

_DTYPES = {
    "float32": np.float32,
    "float64": np.float64,
    "int64": np.int64,
    "int32": np.int32,
    "uint8": np.uint8,
    "bool": np.bool_,
}


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def flatten_tree(tree: Any, prefix: str, tensors: dict[str, torch.Tensor]) -> Any:
    """Replace tensor leaves in a nested dict/list/tuple with directory refs.

    The returned skeleton survives a JSON round trip; integer dict keys
    (optimizer state is keyed that way) are tagged so they come back as ints.
    """
    if isinstance(tree, torch.Tensor):
        tensors[prefix] = tree
        return {"__tensor__": prefix}
    if isinstance(tree, dict):
        flat = {str(k): flatten_tree(v, f"{prefix}/{k}", tensors) for k, v in tree.items()}
        if any(isinstance(k, int) for k in tree):
            return {"__intkeys__": flat}
        return flat
    if isinstance(tree, (list, tuple)):
        return [flatten_tree(v, f"{prefix}/{i}", tensors) for i, v in enumerate(tree)]
    return tree


def unflatten_tree(tree: Any, tensors: dict[str, torch.Tensor]) -> Any:
    if isinstance(tree, dict):
        if set(tree) == {"__tensor__"}:
            return tensors[tree["__tensor__"]]
        if set(tree) == {"__intkeys__"}:
            return {int(k): unflatten_tree(v, tensors) for k, v in tree["__intkeys__"].items()}
        return {k: unflatten_tree(v, tensors) for k, v in tree.items()}
    if isinstance(tree, list):
        return [unflatten_tree(v, tensors) for v in tree]
    return tree


def save_checkpoint(path, tensors: dict[str, torch.Tensor], cfg_hash: str, meta: dict | None = None):
    directory = []
    blobs = []
    for key in sorted(tensors):
        arr = tensors[key].detach().cpu().contiguous().numpy()
        if arr.dtype.name not in _DTYPES:
            raise CheckpointError(f"unsupported tensor dtype {arr.dtype.name} for key {key!r}")
        raw = arr.tobytes()
        directory.append(
            {"key": key, "dtype": arr.dtype.name, "shape": list(arr.shape), "nbytes": len(raw)}
        )
        blobs.append(raw)
    header = {
        "version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "meta": meta or {},
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header_bytes).to_bytes(4, "little"))
        f.write(header_bytes)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path, expect_hash: str | None = None, force: bool = False):
    """Returns (tensors, meta, config_hash). Rejects a config-hash mismatch
    unless force=True."""
    if not os.path.exists(path):
        raise MissingInputError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
        header_len = int.from_bytes(f.read(4), "little")
        try:
            header = json.loads(f.read(header_len))
        except json.JSONDecodeError as e:
            raise CheckpointError(f"corrupt checkpoint header: {e}") from e
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
        stored_hash = header["config_hash"]
        if expect_hash is not None and stored_hash != expect_hash and not force:
            raise CheckpointError(
                f"config hash mismatch: checkpoint {stored_hash}, expected {expect_hash} "
                "(pass force to load anyway)"
            )
        tensors = {}
        for entry in header["tensors"]:
            raw = f.read(entry["nbytes"])
            if len(raw) != entry["nbytes"]:
                raise CheckpointError(f"truncated tensor data for key {entry['key']!r}")
            arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
            tensors[entry["key"]] = torch.from_numpy(arr.copy())
    return tensors, header["meta"], stored_hash


def module_tensors(prefix: str, module: torch.nn.Module) -> dict[str, torch.Tensor]:
    return {f"{prefix}/{name}": t for name, t in module.state_dict().items()}


def load_module(module: torch.nn.Module, tensors: dict[str, torch.Tensor], prefix: str):
    state = {}
    lead = f"{prefix}/"
    for key, t in tensors.items():
        if key.startswith(lead):
            state[key[len(lead):]] = t
    module.load_state_dict(state)
    return module
