"""Binary container for preprocessed tensors, keyed by a run fingerprint.

Layout: magic ``ECDC``, format version (u16), fingerprint (u64), block count
(u32), then per-block records of (name length + utf-8 name, dtype tag, rank,
dims, little-endian float64 payload), and a trailing FNV-1a 64-bit digest of
everything before it. Block names are ``<split>/<feature>``.

The fingerprint hashes the dataset bytes together with the canonical
preprocessing parameters, split policy, and seed, so any change that could
alter the tensors invalidates the cache. A corrupt or mismatched file is
never trusted: readers report it and callers recompute.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .definition import ModelDefinition
from .errors import CorruptionError, DataError, FormatVersionError

MAGIC = b"ECDC"
FORMAT_VERSION = 1
_DTYPE_F64 = 0

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a(data: bytes, state: int = FNV_OFFSET) -> int:
    for byte in data:
        state = ((state ^ byte) * FNV_PRIME) & _MASK64
    return state


def compute_fingerprint(dataset_bytes: bytes, definition: ModelDefinition, seed: int) -> int:
    """Digest of everything preprocessing depends on."""
    recipe = {
        "features": [
            {"name": s.name, "type": s.type, "preprocessing": s.preprocessing}
            for s in list(definition.input_features) + list(definition.output_features)
        ],
        "split": definition.training.split,
        "split_column": definition.training.split_column,
        "seed": seed,
    }
    state = fnv1a(dataset_bytes)
    return fnv1a(json.dumps(recipe, sort_keys=True).encode("utf-8"), state)


def write_cache(path: str | Path, fingerprint: int,
                blocks: dict[str, dict[str, np.ndarray]]) -> None:
    """Persist per-split per-feature arrays; atomic via temp file + rename."""
    body = bytearray()
    body += MAGIC
    body += struct.pack("<H", FORMAT_VERSION)
    body += struct.pack("<Q", fingerprint)
    entries = [(f"{split}/{feature}", array)
               for split, features in blocks.items()
               for feature, array in features.items()]
    body += struct.pack("<I", len(entries))
    for name, array in entries:
        encoded = name.encode("utf-8")
        arr = np.ascontiguousarray(array, dtype=np.float64)
        body += struct.pack("<H", len(encoded)) + encoded
        body += struct.pack("<B", _DTYPE_F64)
        body += struct.pack("<B", arr.ndim)
        for extent in arr.shape:
            body += struct.pack("<I", extent)
        body += arr.tobytes(order="C")
    body += struct.pack("<Q", fnv1a(bytes(body)))
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(bytes(body))
    tmp.replace(path)


def read_cache(path: str | Path, fingerprint: int) -> dict[str, dict[str, np.ndarray]] | None:
    """Load a cache file; ``None`` when the fingerprint does not match.

    Corruption (bad magic, truncation, digest mismatch) raises, so callers
    can warn and recompute rather than silently trusting stale tensors.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 2 + 8 + 4 + 8:
        raise CorruptionError(f"cache file {path} is truncated")
    if raw[: len(MAGIC)] != MAGIC:
        raise CorruptionError(f"cache file {path} has wrong magic bytes")
    stored_digest = struct.unpack("<Q", raw[-8:])[0]
    if fnv1a(raw[:-8]) != stored_digest:
        raise CorruptionError(f"cache file {path} failed its integrity digest")
    offset = len(MAGIC)
    version = struct.unpack_from("<H", raw, offset)[0]
    offset += 2
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"cache file {path} has format version {version}, "
                                 f"expected {FORMAT_VERSION}")
    stored_fingerprint = struct.unpack_from("<Q", raw, offset)[0]
    offset += 8
    if stored_fingerprint != fingerprint:
        return None
    count = struct.unpack_from("<I", raw, offset)[0]
    offset += 4
    blocks: dict[str, dict[str, np.ndarray]] = {}
    try:
        for _ in range(count):
            name_len = struct.unpack_from("<H", raw, offset)[0]
            offset += 2
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            dtype_tag, rank = struct.unpack_from("<BB", raw, offset)
            offset += 2
            if dtype_tag != _DTYPE_F64:
                raise CorruptionError(f"cache file {path}: unknown dtype tag {dtype_tag}")
            dims = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) * 8
            array = np.frombuffer(raw, dtype="<f8", count=int(np.prod(dims)),
                                  offset=offset).reshape(dims).copy()
            offset += size
            split, _, feature = name.partition("/")
            if not feature:
                raise CorruptionError(f"cache file {path}: malformed block name {name!r}")
            blocks.setdefault(split, {})[feature] = array
    except struct.error:
        raise CorruptionError(f"cache file {path} is truncated") from None
    return blocks


def cache_path_for(dataset_path: str | Path) -> Path:
    return Path(str(dataset_path) + ".ecdc")


def dataset_bytes(path: str | Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    return path.read_bytes()
