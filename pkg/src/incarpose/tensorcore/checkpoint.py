"""Flat binary checkpoint container.

Layout::

    8 bytes   little-endian uint64: header length H
    H bytes   UTF-8 JSON header {"format", "version", "meta", "tensors": [{name, shape, offset}]}
    ...       concatenated little-endian float64 payloads; offsets count from the end of the header

The JSON is written with sorted keys and fixed separators so that
save(load(path)) reproduces the file byte for byte.
"""

import json
import struct

import numpy as np

FORMAT = "incarpose-ckpt"
VERSION = 1


def dumps(arrays, meta=None):
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = {"format": FORMAT, "version": VERSION, "meta": meta or {}, "tensors": entries}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<Q", len(hbytes)) + hbytes + b"".join(chunks)


def loads(blob):
    if len(blob) < 8:
        raise ValueError("checkpoint is truncated")
    (hlen,) = struct.unpack("<Q", blob[:8])
    header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    if header.get("format") != FORMAT:
        raise ValueError(f"not an {FORMAT} file")
    base = 8 + hlen
    arrays = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        start = base + e["offset"]
        end = start + 8 * count
        if end > len(blob):
            raise ValueError(f"checkpoint payload for {e['name']!r} is truncated")
        arrays[e["name"]] = np.frombuffer(blob[start:end], dtype="<f8").astype(np.float64).reshape(e["shape"])
    return arrays, header.get("meta", {})


def save_checkpoint(path, arrays, meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps(arrays, meta))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
