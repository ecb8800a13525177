"""Named parameter storage and the PXF1 checkpoint format.

Parameters live in a name -> Tensor mapping with stable creation order;
optimizer moments ride along so a single object captures the whole
training state.  Checkpoints serialize as:

    magic "PXF1"
    per parameter: u32 name length, name (utf-8), u32 rank, u32 dims...,
                   raw little-endian float32 data (row-major)
    u64 blake2b checksum of every record byte after the magic
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

from .tensor import DTYPE, Tensor

MAGIC = b"PXF1"


class ParameterStore:
    """Ordered named parameters plus optimizer state.

    Creation order is the iteration order, so models built the same way
    always serialize identically.
    """

    def __init__(self, seed: int = 0):
        self._params: dict[str, Tensor] = {}
        self.rng = np.random.default_rng(seed)
        self.moments: dict[str, dict[str, np.ndarray]] = {}
        self.step_count = 0

    def create(self, name: str, shape, fan_in: int | None = None, zero: bool = False) -> Tensor:
        """Register a new parameter.

        Weights draw uniformly from +-sqrt(1/fan_in) unless ``zero``;
        biases pass ``zero=True``.
        """
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        shape = tuple(int(s) for s in shape)
        if zero:
            data = np.zeros(shape, dtype=DTYPE)
        else:
            if fan_in is None:
                fan_in = shape[0]
            bound = float(np.sqrt(1.0 / fan_in))
            data = self.rng.uniform(-bound, bound, size=shape)
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return self._params.values()

    def total_parameters(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def serialize(self) -> bytes:
        body = bytearray()
        for name, t in self._params.items():
            encoded = name.encode("utf-8")
            body += struct.pack("<I", len(encoded))
            body += encoded
            body += struct.pack("<I", t.ndim)
            body += struct.pack(f"<{t.ndim}I", *t.shape)
            body += np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        checksum = hashlib.blake2b(bytes(body), digest_size=8).digest()
        return MAGIC + bytes(body) + checksum

    def load(self, blob: bytes) -> None:
        """Restore parameter values from a PXF1 blob.

        Names and shapes must match the store's current layout.
        """
        arrays = parse_checkpoint(blob)
        for name, t in self._params.items():
            if name not in arrays:
                raise ValueError(f"checkpoint missing parameter {name!r}")
            arr = arrays.pop(name)
            if arr.shape != t.shape:
                raise ValueError(f"parameter {name!r} shape mismatch: store {t.shape}, file {arr.shape}")
            t.data = arr.astype(DTYPE)
        if arrays:
            extra = next(iter(arrays))
            raise ValueError(f"checkpoint contains unknown parameter {extra!r}")

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.serialize())

    def load_file(self, path) -> None:
        with open(path, "rb") as fh:
            self.load(fh.read())


def parse_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    """Decode a PXF1 blob into name -> float32 array, verifying the checksum."""
    if blob[:4] != MAGIC:
        raise ValueError(f"bad checkpoint magic at byte 0: {blob[:4]!r}")
    if len(blob) < 12:
        raise ValueError(f"checkpoint truncated: {len(blob)} bytes")
    body, stored = blob[4:-8], blob[-8:]
    actual = hashlib.blake2b(body, digest_size=8).digest()
    if actual != stored:
        raise ValueError("checkpoint checksum mismatch")

    arrays: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(body):
        if pos + 4 > len(body):
            raise ValueError(f"checkpoint record truncated at byte {pos + 4}")
        (name_len,) = struct.unpack_from("<I", body, pos)
        pos += 4
        name = body[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", body, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", body, pos)
        pos += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        raw = body[pos : pos + 4 * count]
        if len(raw) < 4 * count:
            raise ValueError(f"checkpoint data truncated at byte {4 + pos + len(raw)}")
        pos += 4 * count
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return arrays
