"""Versioned binary records for eigen-data and operator dumps.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON
header, then an ``.npz`` payload. Writes go to a temporary file in the
target directory followed by ``os.replace`` so concurrent readers never see
a partial record.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"IMMREC\x00\x01"
FORMAT_VERSION = 1
CACHE_ENV = "IMMERSION_CACHE_DIR"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "immersion"


def content_key(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part).tobytes())
        else:
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()


def write_record(path, header: dict, arrays: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {"format_version": FORMAT_VERSION, "endianness": sys.byteorder, **header}
    head_bytes = json.dumps(head, sort_keys=True, default=str).encode()
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(head_bytes)))
            fh.write(head_bytes)
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_record(path, key: Optional[str] = None) -> Optional[tuple[dict, dict]]:
    """Return ``(header, arrays)`` or ``None`` for a missing, foreign or stale record."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError:
        return None
    if raw[:8] != MAGIC or len(raw) < 12:
        return None
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen])
        if header.get("format_version") != FORMAT_VERSION:
            return None
        if key is not None and header.get("key") != key:
            return None
        with np.load(io.BytesIO(raw[12 + hlen:])) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except (ValueError, OSError, json.JSONDecodeError):
        return None
    return header, arrays


class EigenCache:
    def __init__(self, directory=None, enabled: bool = True):
        self.directory = Path(directory) if directory else default_cache_dir()
        self.enabled = enabled
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.directory / f"eig-{key[:32]}.rec"

    def load(self, key: str) -> Optional[dict]:
        if not self.enabled:
            return None
        rec = read_record(self.path(key), key)
        if rec is None:
            self.misses += 1
            return None
        self.hits += 1
        return rec[1]

    def store(self, key: str, arrays: dict, **meta) -> Optional[Path]:
        if not self.enabled:
            return None
        header = {"key": key, "created": datetime.now(timezone.utc).isoformat(), **meta}
        return write_record(self.path(key), header, arrays)


def dump_operator(op, path, mu2: Optional[float] = None) -> Path:
    """Binary dump of an assembled operator matrix with its domain hash."""
    header = {"kind": "dirac-operator", "dims": list(op.matrix.shape),
              "domain": op.domain.key(), "domain_hash": content_key(op.domain.key()),
              "operator_hash": op.content_hash(), "mu2": mu2, "bc": list(op.bc),
              "dtype": str(op.matrix.dtype)}
    return write_record(path, header, {"matrix": op.matrix, "rho": op.rho, "p": op.p})


def load_operator(path) -> tuple[dict, dict]:
    rec = read_record(path)
    if rec is None:
        raise ValueError(f"{path} is not a readable operator record")
    return rec
