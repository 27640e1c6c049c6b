"""Versioned binary checkpoint container for model handles.

Layout (all integers little-endian):

    bytes 0..7    magic  b"S2SDNET1"
    bytes 8..11   format version (uint32), currently 1
    bytes 12..15  manifest length in bytes (uint32)
    manifest      UTF-8 JSON: {"role", "config": {...}, "arrays": [[name, shape], ...]}
    payload       the arrays as raw little-endian float32, C order, manifest order

The arrays are the module state (weights, biases, batch-norm running stats).
Integer bookkeeping counters (torch's num_batches_tracked) are not stored; the
container is float32-only and the layers are configured so the counters are
inert. Saving the same handle twice yields byte-identical files.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .networks import CONFIG_TYPES, ModelHandle, build_model

MAGIC = b"S2SDNET1"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    """File is not a checkpoint or its structure is corrupt."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class CheckpointConfigError(CheckpointError):
    """Checkpoint role/config does not match what the caller expects."""


def save_checkpoint(handle: ModelHandle, path) -> None:
    """Write ``handle`` to ``path`` in the container format above."""
    state = handle.module.state_dict()
    names = []
    blobs = []
    for name, tensor in state.items():
        if tensor.dtype == torch.int64:
            continue  # bookkeeping counters; format carries float32 only
        if tensor.dtype != torch.float32:
            raise CheckpointError(f"cannot serialize {name}: dtype {tensor.dtype} unsupported")
        arr = tensor.detach().cpu().contiguous().numpy()
        names.append([name, list(arr.shape)])
        blobs.append(arr.astype("<f4", copy=False).tobytes())
    manifest = {
        "role": handle.role,
        "config": dict(vars(handle.config)),
        "arrays": names,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(manifest_bytes)))
        fh.write(manifest_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, expect_role: str | None = None, expect: dict | None = None) -> ModelHandle:
    """Read a checkpoint back into a freshly built handle.

    ``expect_role`` / ``expect`` (config field -> required value) guard the
    call site: a mismatch raises CheckpointConfigError instead of silently
    returning an incompatible network. Round-trips are bit-exact.
    """
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 8:
        raise CheckpointFormatError(f"{path}: file too short to be a checkpoint")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic bytes (corrupt or not a checkpoint)")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, this build reads version {FORMAT_VERSION}"
        )
    (manifest_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if offset + manifest_len > len(data):
        raise CheckpointFormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[offset : offset + manifest_len].decode("utf-8"))
        role = manifest["role"]
        config_kv = manifest["config"]
        arrays = manifest["arrays"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable manifest ({exc})") from exc
    offset += manifest_len

    if role not in CONFIG_TYPES:
        raise CheckpointFormatError(f"{path}: unknown role {role!r}")
    try:
        config = CONFIG_TYPES[role](**config_kv)
    except TypeError as exc:
        raise CheckpointFormatError(f"{path}: config does not match role {role!r} ({exc})") from exc

    if expect_role is not None and role != expect_role:
        raise CheckpointConfigError(f"{path}: role {role!r}, expected {expect_role!r}")
    for key, wanted in (expect or {}).items():
        got = getattr(config, key, None)
        if got != wanted:
            raise CheckpointConfigError(f"{path}: config {key}={got!r}, expected {key}={wanted!r}")

    handle = build_model(role, config)
    state: dict[str, torch.Tensor] = {}
    for name, shape in arrays:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise CheckpointFormatError(f"{path}: truncated payload at array {name!r}")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())
        offset += nbytes
    if offset != len(data):
        raise CheckpointFormatError(f"{path}: {len(data) - offset} trailing bytes after payload")

    missing, unexpected = handle.module.load_state_dict(state, strict=False)
    if unexpected:
        raise CheckpointFormatError(f"{path}: arrays not present in model: {unexpected}")
    real_missing = [k for k in missing if not k.endswith("num_batches_tracked")]
    if real_missing:
        raise CheckpointFormatError(f"{path}: arrays missing from file: {real_missing}")
    return handle
