"""Binary checkpoint: magic 'HAJ1', embedded config text, float32 tensors.

Layout (little-endian):
    magic  4s      b"HAJ1"
    u16            format version (1)
    u32            config text length, then UTF-8 bytes
    32s            sha256 digest of the config text
    f64, f64       omega map (gain, offset)
    u32            tensor count
    per tensor:    u16 name length, name bytes, u8 rank, u32 dims..., f32 values

Parameters are stored as float32 (4 bytes each) even though compute is
float64; load() widens back.  save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .models import HyperAJSCCModel

MAGIC = b"HAJ1"
VERSION = 1


class CorruptCheckpointError(ValueError):
    """File is not a readable checkpoint."""


class DigestMismatchError(ValueError):
    """Checkpoint was trained under a different config."""


def save_checkpoint(path: str, model: HyperAJSCCModel, config_text: str) -> None:
    cfg_bytes = config_text.encode()
    parts = [
        MAGIC,
        struct.pack("<H", VERSION),
        struct.pack("<I", len(cfg_bytes)),
        cfg_bytes,
        hashlib.sha256(cfg_bytes).digest(),
        struct.pack("<dd", model.config.omega_gain, model.config.omega_offset),
    ]
    named = model.named_parameters()
    parts.append(struct.pack("<I", len(named)))
    for name, t in named:
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", t.data.ndim))
        parts.append(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        parts.append(t.data.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_checkpoint(path: str) -> tuple[str, tuple[float, float], dict[str, np.ndarray]]:
    """Returns (config_text, (omega_gain, omega_offset), name -> float64 array)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        if blob[:4] != MAGIC:
            raise CorruptCheckpointError(f"{path}: bad magic {blob[:4]!r}")
        off = 4
        (version,) = struct.unpack_from("<H", blob, off)
        off += 2
        if version != VERSION:
            raise CorruptCheckpointError(f"{path}: unsupported version {version}")
        (cfg_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        cfg_bytes = blob[off : off + cfg_len]
        off += cfg_len
        digest = blob[off : off + 32]
        off += 32
        if hashlib.sha256(cfg_bytes).digest() != digest:
            raise CorruptCheckpointError(f"{path}: embedded config digest mismatch")
        gain, offset = struct.unpack_from("<dd", blob, off)
        off += 16
        (n_tensors,) = struct.unpack_from("<I", blob, off)
        off += 4
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + name_len].decode()
            off += name_len
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            values = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
            off += 4 * count
            tensors[name] = values.astype(np.float64).reshape(dims)
        if off != len(blob):
            raise CorruptCheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    except (struct.error, ValueError, IndexError, UnicodeDecodeError) as exc:
        if isinstance(exc, CorruptCheckpointError):
            raise
        raise CorruptCheckpointError(f"{path}: truncated or corrupt ({exc})") from None
    return cfg_bytes.decode(), (gain, offset), tensors


def load_model(path: str, expected_config_text: str | None = None, force: bool = False):
    """Rebuild a model from a checkpoint; returns (model, run_config)."""
    from .config import parse_run_config
    from .models import build_model

    config_text, _, tensors = read_checkpoint(path)
    if expected_config_text is not None and expected_config_text != config_text and not force:
        raise DigestMismatchError(f"{path}: config digest differs from the provided config")
    run_cfg = parse_run_config(config_text)
    model = build_model(run_cfg.model, seed=run_cfg.train.seed)
    named = dict(model.named_parameters())
    if set(named) != set(tensors):
        raise CorruptCheckpointError(f"{path}: tensor table does not match the architecture")
    for name, values in tensors.items():
        if named[name].shape != values.shape:
            raise CorruptCheckpointError(f"{path}: tensor {name} has shape {values.shape}, expected {named[name].shape}")
        named[name].data = values
    return model, run_cfg
