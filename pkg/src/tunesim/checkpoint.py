"""Versioned named-tensor checkpoint format.

Layout, all little-endian:

    magic b"HTCL" | u32 format_version | u32 config_len | config JSON
    | u32 n_tensors | directory | payload

Directory entry: u16 name_len | name utf-8 | u8 dtype (0 = float32)
| u8 rank | u32 dims[rank] | u64 byte offset into the payload section.
Payload is the concatenation of all tensors as contiguous float32.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .errors import CheckpointError

CHECKPOINT_MAGIC = b"HTCL"
FORMAT_VERSION = 1
_DTYPE_F32 = 0


@dataclass
class CheckpointBundle:
    config: dict
    tensors: dict[str, np.ndarray]


def save_checkpoint(path, config: dict, tensors: dict) -> None:
    """Write a checkpoint. Tensor names are stored sorted, so identical
    content yields identical bytes."""
    arrays = {}
    for name, value in tensors.items():
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().numpy()
        # asarray keeps rank-0 arrays rank 0 (ascontiguousarray would not)
        arrays[name] = np.asarray(value, dtype="<f4", order="C")

    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(arrays)))
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name]
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BB", _DTYPE_F32, arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(struct.pack("<Q", offset))
        offset += arr.nbytes
    for name in sorted(arrays):
        buf.write(arrays[name].tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"checkpoint {self.path} is truncated")
        out = self.blob[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> CheckpointBundle:
    """Read a checkpoint, validating structure before touching tensor
    data."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}")
    r = _Reader(blob, path)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path} has format version {version}, "
                              f"this build reads version {FORMAT_VERSION}")
    (config_len,) = r.unpack("<I")
    try:
        config = json.loads(r.take(config_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} config blob is corrupt: {exc}")
    (n_tensors,) = r.unpack("<I")
    entries = []
    for _ in range(n_tensors):
        (name_len,) = r.unpack("<H")
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path} tensor name is corrupt: {exc}")
        dtype_code, rank = r.unpack("<BB")
        if dtype_code != _DTYPE_F32:
            raise CheckpointError(f"{path} tensor {name} has unknown dtype "
                                  f"code {dtype_code}")
        dims = tuple(r.unpack("<" + "I" * rank)) if rank else ()
        (offset,) = r.unpack("<Q")
        entries.append((name, dims, offset))
    payload_start = r.pos
    payload_len = len(blob) - payload_start

    tensors = {}
    for name, dims, offset in entries:
        if name in tensors:
            raise CheckpointError(f"{path} has duplicate tensor {name}")
        count = 1
        for dim in dims:
            count *= dim
        end = offset + 4 * count
        if end > payload_len:
            raise CheckpointError(f"{path} tensor {name} extends past the "
                                  "payload (truncated checkpoint?)")
        arr = np.frombuffer(blob, dtype="<f4", count=count,
                            offset=payload_start + offset)
        tensors[name] = arr.reshape(dims).copy()
    return CheckpointBundle(config=config, tensors=tensors)


def model_state_arrays(model: torch.nn.Module) -> dict[str, np.ndarray]:
    """Model parameters and buffers as float32 arrays keyed by state-dict
    name."""
    return {name: tensor.detach().cpu().numpy().astype(np.float32)
            for name, tensor in model.state_dict().items()}


def apply_model_state(model: torch.nn.Module, tensors: dict) -> None:
    """Load state-dict tensors into the model, checking presence and shape.

    Extra tensors (for example optimizer moments) are ignored here.
    """
    state = model.state_dict()
    loaded = {}
    for name, param in state.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {name}")
        arr = tensors[name]
        if tuple(arr.shape) != tuple(param.shape):
            raise CheckpointError(
                f"tensor {name} has shape {tuple(arr.shape)}, the model "
                f"expects {tuple(param.shape)}")
        loaded[name] = torch.from_numpy(np.ascontiguousarray(arr))
    model.load_state_dict(loaded)
