"""PSGW weight files.

Layout (little-endian): magic ``PSGW``, version u8, variant code u8, bands
u32, parameter count u32, then per parameter a u16 name length, the UTF-8
name, ndim u8, ndim u32 dims and the float64 data in C order. Batch-norm
running statistics are stored alongside the trainable parameters.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, IoFailure, TruncatedPayload, UnsupportedVersion, VariantMismatch
from ..nn.graph import ParameterStore
from ..raster import atomic_write_bytes
from .networks import VARIANT_CODES, canonical_variant

MAGIC = b"PSGW"
VERSION = 1
UNTAGGED = 255  # stores that belong to no generator variant (the discriminator)
_HEADER = struct.Struct("<4sBBII")
_CODE_TO_VARIANT = {v: k for k, v in VARIANT_CODES.items()}
_BUFFER_SUFFIXES = (".running_mean", ".running_var")


def encode_weights(store: ParameterStore) -> bytes:
    code = UNTAGGED if store.variant is None else VARIANT_CODES[canonical_variant(store.variant)]
    parts = [_HEADER.pack(MAGIC, VERSION, code, store.bands or 0, len(store.params))]
    for name, arr in store.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayload(f"weights file ends inside {what}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def decode_weights(buf: bytes, variant: str | None = None) -> ParameterStore:
    """Parse a PSGW buffer; ``variant`` (if given) must match the stored tag."""
    if buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {bytes(buf[:4])!r}", 0)
    r = _Reader(buf)
    _, version, code, bands, count = r.unpack(_HEADER.format, "header")
    if version != VERSION:
        raise UnsupportedVersion(f"weights version {version} (supported: {VERSION})", 4)
    stored = None if code == UNTAGGED else _CODE_TO_VARIANT.get(code)
    if code != UNTAGGED and stored is None:
        raise VariantMismatch(f"unknown variant code {code}")
    if variant is not None and stored != canonical_variant(variant):
        raise VariantMismatch(f"file holds {stored or 'untagged'} weights, requested {variant}")
    store = ParameterStore(variant=stored, bands=bands or None)
    for _ in range(count):
        (n,) = r.unpack("<H", "name length")
        name = r.take(n, "name").decode("utf-8")
        (ndim,) = r.unpack("<B", "ndim")
        dims = r.unpack(f"<{ndim}I", "dims")
        size = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(r.take(8 * size, f"data of {name}"), dtype="<f8")
        store.params[name] = data.astype(np.float64).reshape(dims)
        if not name.endswith(_BUFFER_SUFFIXES):
            store.trainable.add(name)
    if r.pos != len(buf):
        raise TruncatedPayload(f"{len(buf) - r.pos} trailing bytes after last parameter", r.pos)
    return store


def save_weights(store: ParameterStore, path: str | Path) -> None:
    atomic_write_bytes(Path(path), encode_weights(store))


def load_weights(path: str | Path, variant: str | None = None) -> ParameterStore:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_weights(buf, variant)
