"""Named-tensor weight files: a JSON manifest plus a little-endian float64 blob."""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import Dict

import numpy as np
from pydantic import ValidationError

from .errors import DataError
from .schema import TensorEntry, WeightManifest

logger = logging.getLogger(__name__)

_DTYPE = np.dtype("<f8")


def save_arrays(arrays: Dict[str, np.ndarray], manifest_path: Path) -> None:
    blob_path = manifest_path.with_suffix(".bin")
    entries = []
    chunks = []
    for name, value in arrays.items():
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise DataError(f"refusing to save non-finite tensor {name}")
        entries.append(TensorEntry(name=name, shape=list(value.shape)))
        chunks.append(np.ascontiguousarray(value, dtype=_DTYPE).tobytes())
    blob = b"".join(chunks)
    blob_path.write_bytes(blob)
    manifest = WeightManifest(
        blob=blob_path.name,
        sha256=hashlib.sha256(blob).hexdigest(),
        tensors=entries,
    )
    manifest_path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.debug("wrote %d tensors to %s", len(entries), manifest_path)


def load_arrays(manifest_path: Path) -> Dict[str, np.ndarray]:
    if not manifest_path.exists():
        raise DataError(f"weight manifest not found: {manifest_path}")
    try:
        manifest = WeightManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise DataError(f"invalid weight manifest {manifest_path}: {exc}") from exc

    blob_path = manifest_path.parent / manifest.blob
    if not blob_path.exists():
        raise DataError(f"weight blob not found: {blob_path}")
    blob = blob_path.read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest.sha256:
        raise DataError(f"weight blob {blob_path} does not match its manifest checksum")

    expected = sum(int(np.prod(e.shape, dtype=np.int64)) for e in manifest.tensors) * _DTYPE.itemsize
    if len(blob) != expected:
        raise DataError(f"weight blob {blob_path} has {len(blob)} bytes, expected {expected}")

    arrays: Dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest.tensors:
        count = int(np.prod(entry.shape, dtype=np.int64))
        flat = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=offset)
        arrays[entry.name] = flat.astype(np.float64).reshape(entry.shape)
        offset += count * _DTYPE.itemsize
    return arrays
