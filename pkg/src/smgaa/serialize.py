"""Binary tensor files ("SMGT") and multi-tensor checkpoint containers.

Tensor layout (little endian)::

    b"SMGT" | u16 version | u8 rank | rank x u64 extents | float64 values

Checkpoint container::

    b"SMGC" | u16 version | u32 config length | config text (utf-8)
    | u32 entry count | entries: u16 path length, path, u64 offset, u64 length
    | blobs (each a complete SMGT record; offsets are from the file start)
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"SMGT"
CHECKPOINT_MAGIC = b"SMGC"
VERSION = 1


def encode_tensor(array) -> bytes:
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim > 255:
        raise ValueError("rank does not fit in u8")
    header = TENSOR_MAGIC + struct.pack("<HB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.astype("<f8").tobytes(order="C")


def decode_tensor(blob: bytes) -> np.ndarray:
    if blob[:4] != TENSOR_MAGIC:
        raise ValueError("not an SMGT tensor record")
    version, rank = struct.unpack_from("<HB", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported SMGT version {version}")
    offset = 7
    shape = struct.unpack_from(f"<{rank}Q", blob, offset)
    offset += 8 * rank
    count = int(np.prod(shape)) if rank else 1
    if len(blob) - offset != 8 * count:
        raise ValueError(f"SMGT payload holds {(len(blob) - offset) // 8} values, header says {count}")
    return np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)


def save_tensor(path, array) -> None:
    Path(path).write_bytes(encode_tensor(array))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def encode_checkpoint(tensors: dict[str, np.ndarray], config_text: str = "") -> bytes:
    cfg = config_text.encode("utf-8")
    blobs = [(name.encode("utf-8"), encode_tensor(arr)) for name, arr in tensors.items()]
    toc_size = 4 + sum(2 + len(name) + 16 for name, _ in blobs)
    offset = 4 + 2 + 4 + len(cfg) + toc_size
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC + struct.pack("<HI", VERSION, len(cfg)) + cfg)
    out.write(struct.pack("<I", len(blobs)))
    for name, blob in blobs:
        out.write(struct.pack("<H", len(name)) + name + struct.pack("<QQ", offset, len(blob)))
        offset += len(blob)
    for _, blob in blobs:
        out.write(blob)
    return out.getvalue()


def decode_checkpoint(data: bytes) -> tuple[dict[str, np.ndarray], str]:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not an SMGC checkpoint")
    version, cfg_len = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 10
    config_text = data[pos : pos + cfg_len].decode("utf-8")
    pos += cfg_len
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        offset, length = struct.unpack_from("<QQ", data, pos)
        pos += 16
        tensors[name] = decode_tensor(data[offset : offset + length])
    return tensors, config_text


def save_checkpoint(path, tensors: dict[str, np.ndarray], config_text: str = "") -> None:
    Path(path).write_bytes(encode_checkpoint(tensors, config_text))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    return decode_checkpoint(Path(path).read_bytes())
