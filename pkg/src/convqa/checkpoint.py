"""Single-file binary checkpoints.

Layout: 8-byte magic, uint32 little-endian manifest length, UTF-8 JSON
manifest, then the raw tensor blocks back to back.  The manifest carries a
free-form ``meta`` dict plus one entry per tensor with name, shape, dtype and
byte offset into the data section.  Tensors are stored little-endian in
C order, so files round-trip bit-exactly across platforms.
"""

import json
import struct

import numpy as np

from .errors import ParseError

MAGIC = b"CONVQA01"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


def save_checkpoint(path, named_arrays, meta=None):
    """Write (name, ndarray) pairs plus a JSON-able meta dict to path."""
    entries = []
    blocks = []
    offset = 0
    for name, array in named_arrays:
        array = np.ascontiguousarray(array)
        kind = array.dtype.name
        if kind not in _DTYPES:
            raise ParseError("unsupported checkpoint dtype %s for %r" % (kind, name))
        block = array.astype(_DTYPES[kind], copy=False).tobytes()
        entries.append({"name": name, "shape": list(array.shape),
                        "dtype": kind, "offset": offset})
        blocks.append(block)
        offset += len(block)
    manifest = {"version": FORMAT_VERSION,
                "meta": meta or {},
                "tensors": entries}
    payload = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for block in blocks:
            fh.write(block)


def load_checkpoint(path):
    """Read a checkpoint; returns (dict name -> ndarray, meta dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ParseError("%s is not a checkpoint (bad magic)" % path)
    if len(raw) < 12:
        raise ParseError("%s: truncated checkpoint header" % path)
    (length,) = struct.unpack("<I", raw[8:12])
    body = raw[12:12 + length]
    if len(body) < length:
        raise ParseError("%s: truncated checkpoint manifest" % path)
    try:
        manifest = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError("%s: bad checkpoint manifest (%s)" % (path, exc)) from exc
    if manifest.get("version") != FORMAT_VERSION:
        raise ParseError("%s: unsupported checkpoint version %r"
                         % (path, manifest.get("version")))
    data = raw[12 + length:]
    arrays = {}
    for entry in manifest.get("tensors", []):
        try:
            name = entry["name"]
            shape = tuple(entry["shape"])
            kind = entry["dtype"]
            start = int(entry["offset"])
        except (KeyError, TypeError) as exc:
            raise ParseError("%s: malformed tensor entry %r" % (path, entry)) from exc
        if kind not in _DTYPES:
            raise ParseError("%s: tensor %r has unsupported dtype %r"
                             % (path, name, kind))
        dtype = np.dtype(_DTYPES[kind])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        stop = start + count * dtype.itemsize
        if start < 0 or stop > len(data):
            raise ParseError("%s: tensor %r overruns file" % (path, name))
        flat = np.frombuffer(data[start:stop], dtype=dtype)
        arrays[name] = flat.reshape(shape).astype(kind)
    return arrays, manifest.get("meta", {})
