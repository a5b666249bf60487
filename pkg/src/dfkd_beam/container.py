"""
Binary container shared by checkpoints and dataset files.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic (e.g. b"DFKDCKPT", b"DFKDDSET")
    8       4     uint32 format version
    12      8     uint64 header length in bytes (n)
    20      n     UTF-8 JSON header
    20+n    ...   raw array payloads, back to back, in header["arrays"] order

``header["arrays"]`` is a list of ``{"name", "dtype", "shape"}`` records;
dtypes are little-endian numpy codes (``<f8``, ``<i4``). Payload offsets are
implied by the order and sizes, so the header never needs patching.
"""

from __future__ import annotations

import json
import os
import struct
from typing import Mapping

import numpy as np

from .errors import FormatError, ShapeMismatchError, VersionError

FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_ALLOWED = {"<f8", "<i4", "<i8"}


def write_container(path, magic: bytes, header: dict, arrays: Mapping[str, np.ndarray]) -> None:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    header = dict(header)
    specs = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<").str
        if dt not in _ALLOWED:
            raise FormatError(f"array {name!r} has unsupported dtype {arr.dtype}")
        specs.append({"name": name, "dtype": dt, "shape": list(arr.shape)})
        payloads.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    header["arrays"] = specs
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(magic, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for p in payloads:
            fh.write(p)
    os.replace(tmp, path)


def _read_prefix(fh, magic: bytes, path) -> dict:
    raw = fh.read(_PREFIX.size)
    if len(raw) < _PREFIX.size:
        raise FormatError(f"{path}: file too short to be a container")
    got, version, n = _PREFIX.unpack(raw)
    if got != magic:
        raise FormatError(f"{path}: bad magic bytes {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    blob = fh.read(n)
    if len(blob) != n:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: header is not valid JSON ({exc})") from None
    if not isinstance(header, dict) or not isinstance(header.get("arrays"), list):
        raise FormatError(f"{path}: header lacks an 'arrays' list")
    return header


def read_header(path, magic: bytes) -> dict:
    """Parse only the JSON header; payloads are not touched."""
    with open(path, "rb") as fh:
        return _read_prefix(fh, magic, path)


def read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header = _read_prefix(fh, magic, path)
        arrays = {}
        for spec in header["arrays"]:
            try:
                name, dt, shape = spec["name"], spec["dtype"], tuple(int(s) for s in spec["shape"])
            except (KeyError, TypeError, ValueError):
                raise FormatError(f"{path}: malformed array record {spec!r}") from None
            if dt not in _ALLOWED:
                raise FormatError(f"{path}: unsupported dtype {dt!r} for {name!r}")
            count = int(np.prod(shape)) if shape else 1
            nbytes = count * np.dtype(dt).itemsize
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise ShapeMismatchError(
                    f"{path}: payload for {name!r} has {len(raw)} bytes, header promises {nbytes}")
            arrays[name] = np.frombuffer(raw, dtype=dt).reshape(shape).astype(np.dtype(dt).newbyteorder("="))
        if fh.read(1):
            raise ShapeMismatchError(f"{path}: trailing bytes after the last payload")
    return header, arrays
