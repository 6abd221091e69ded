"""Sub-byte integer packing and Tensor <-> numpy conversion.

Packed dtypes store signed values as two's complement inside a nibble (I4x2)
or crumb (I2x4). Element ``k*i + j`` of a k-per-byte layout occupies bits
``[j*b, (j+1)*b)`` of byte ``i``; unused trailing bits are zero.
"""
import numpy as np

from core.data_types import DType
from core.exceptions import ArgumentError, CorruptionError
from core.tensor import Tensor


def _pack(values: np.ndarray, bits: int) -> bytes:
    flat = np.asarray(values).ravel()
    if flat.size and not np.issubdtype(flat.dtype, np.integer):
        raise ArgumentError(f"Packing needs integer values, got {flat.dtype}")
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if flat.size and (flat.min() < lo or flat.max() > hi):
        raise ArgumentError(f"Values out of {bits}-bit range [{lo}, {hi}]")

    per_byte = 8 // bits
    fields = (flat.astype(np.int16) & ((1 << bits) - 1)).astype(np.uint8)
    pad = (-fields.size) % per_byte
    if pad:
        fields = np.concatenate([fields, np.zeros(pad, dtype=np.uint8)])
    fields = fields.reshape(-1, per_byte)

    packed = np.zeros(fields.shape[0], dtype=np.uint8)
    for j in range(per_byte):
        packed |= fields[:, j] << np.uint8(j * bits)
    return packed.tobytes()


def _unpack(data: bytes, count: int, bits: int) -> np.ndarray:
    per_byte = 8 // bits
    raw = np.frombuffer(data, dtype=np.uint8)
    if raw.size * per_byte < count:
        raise CorruptionError(f"{raw.size} bytes cannot hold {count} {bits}-bit values")

    mask = np.uint8((1 << bits) - 1)
    fields = np.empty((raw.size, per_byte), dtype=np.uint8)
    for j in range(per_byte):
        fields[:, j] = (raw >> np.uint8(j * bits)) & mask
    values = fields.ravel()[:count].astype(np.int8)
    values[values >= (1 << (bits - 1))] -= (1 << bits)
    return values


def pack_int4(values: np.ndarray) -> bytes:
    return _pack(values, 4)


def unpack_int4(data: bytes, count: int) -> np.ndarray:
    return _unpack(data, count, 4)


def pack_int2(values: np.ndarray) -> bytes:
    return _pack(values, 2)


def unpack_int2(data: bytes, count: int) -> np.ndarray:
    return _unpack(data, count, 2)


def tensor_to_array(tensor: Tensor) -> np.ndarray:
    """Decode a payload: float32 for F32, int8 integer values otherwise (read-only for F32/I8)"""
    if tensor.dtype is DType.F32:
        flat = np.frombuffer(tensor.data, dtype='<f4')
    elif tensor.dtype is DType.I8:
        flat = np.frombuffer(tensor.data, dtype=np.int8)
    else:
        flat = _unpack(tensor.data, tensor.numel, tensor.dtype.bits)
    if flat.size != tensor.numel:
        raise CorruptionError(
            f"Tensor '{tensor.name}' payload holds {flat.size} elements, shape needs {tensor.numel}"
        )
    return flat.reshape(tensor.shape)


def array_to_tensor(name: str, array: np.ndarray, dtype: DType = DType.F32) -> Tensor:
    array = np.asarray(array)
    if dtype is DType.F32:
        data = np.ascontiguousarray(array, dtype='<f4').tobytes()
    elif dtype is DType.I8:
        if array.size and (array.min() < -128 or array.max() > 127):
            raise ArgumentError(f"Values of '{name}' out of 8-bit range")
        data = np.ascontiguousarray(array, dtype=np.int8).tobytes()
    else:
        data = _pack(array, dtype.bits)
    return Tensor(name=name, dtype=dtype, shape=array.shape, data=data)
