"""Binary field dumps.

Layout: b"RSHF", then little-endian u32 version, dim, points, components,
then components * points**dim float64 values (little-endian, C order,
component axis first).
"""
import struct

import numpy as np

MAGIC = b"RSHF"
VERSION = 1
_HEAD = struct.Struct("<4sIIII")


def write_field(path, values, dim, note=""):
    values = np.asarray(values, dtype="<f8")
    points = values.shape[-1]
    if values.shape[values.ndim - dim:] != (points,) * dim:
        raise ValueError(f"field grid axes {values.shape[-dim:]} are not square")
    comps = int(np.prod(values.shape[:values.ndim - dim], dtype=np.int64))
    try:
        with open(path, "wb") as fh:
            fh.write(_HEAD.pack(MAGIC, VERSION, dim, points, comps))
            fh.write(np.ascontiguousarray(values).tobytes())
        if note:
            with open(str(path) + ".txt", "w") as fh:
                fh.write(note.rstrip() + "\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


def read_field(path):
    """Return (values with shape (components, *grid), dim)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        magic, version, dim, points, comps = _HEAD.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a field dump")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    expected = comps * points ** dim
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {data.size}")
    return data.reshape((comps,) + (points,) * dim).astype(float), dim
