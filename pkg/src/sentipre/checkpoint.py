"""Versioned checkpoint files: plain-text manifest + named tensor blob.

Layout (single file, little-endian):
  magic "SPCK", u32 format version,
  u32 manifest length, manifest utf-8 ("key=value" lines, sorted keys),
  u32 tensor count, then per tensor:
    u32 name length, name utf-8, u32 ndim, u32 dims..., float32 data.

Save -> load -> save is byte-identical; load validates shapes and detects
truncation.
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"SPCK"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, manifest: dict[str, str], tensors: "OrderedDict[str, np.ndarray]") -> None:
    man_text = "".join(f"{k}={manifest[k]}\n" for k in sorted(manifest))
    man_bytes = man_text.encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(man_bytes)))
        f.write(man_bytes)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            # note: ascontiguousarray would promote 0-d arrays to (1,)
            data = np.asarray(arr, dtype="<f4")
            if data.ndim and not data.flags["C_CONTIGUOUS"]:
                data = np.ascontiguousarray(data)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes(order="C"))


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def load_checkpoint(path) -> tuple[dict[str, str], "OrderedDict[str, np.ndarray]"]:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {version}")
        (man_len,) = struct.unpack("<I", _read_exact(f, 4))
        manifest = {}
        for line in _read_exact(f, man_len).decode("utf-8").splitlines():
            k, _, v = line.partition("=")
            manifest[k] = v
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        tensors: OrderedDict[str, np.ndarray] = OrderedDict()
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4))
            name = _read_exact(f, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(_read_exact(f, 4 * size), dtype="<f4").reshape(shape)
            tensors[name] = data.astype(np.float32)
        if f.read(1):
            raise CheckpointError("trailing bytes after tensor blob")
    return manifest, tensors
