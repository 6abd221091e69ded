from enum import Enum


class DType(Enum):
    F32 = 'F32'
    I8 = 'I8'
    I4X2 = 'I4x2'
    I2X4 = 'I2x4'

    @property
    def bits(self) -> int:
        return _BITS[self]

    @property
    def is_quantized(self) -> bool:
        return self is not DType.F32

    def nbytes(self, count: int) -> int:
        """Payload size of `count` elements, packed dtypes rounded up to whole bytes"""
        if self is DType.F32:
            return count * 4
        per_byte = 8 // self.bits
        return -(-count // per_byte)

    @classmethod
    def parse(cls, tag: str) -> 'DType':
        for dtype in cls:
            if dtype.value == tag:
                return dtype
        raise ValueError(f"Unknown dtype '{tag}'")

    @classmethod
    def for_bits(cls, bits: int) -> 'DType':
        for dtype in (cls.I8, cls.I4X2, cls.I2X4):
            if dtype.bits == bits:
                return dtype
        raise ValueError(f"No integer dtype for {bits} bits")


_BITS = {
    DType.F32: 32,
    DType.I8: 8,
    DType.I4X2: 4,
    DType.I2X4: 2,
}


class LayerKind(Enum):
    LINEAR = 'linear'
    CONV2D = 'conv2d'
    EMBEDDING = 'embedding'
    LAYERNORM = 'layernorm'
    RELU = 'relu'
    GELU = 'gelu'
    SOFTMAX_ATTENTION = 'softmax_attention'
    SPLIT_SUM = 'split_sum'


# Layers whose weights may be partitioned into cluster sublayers
SPLITTABLE_KINDS = frozenset({LayerKind.LINEAR, LayerKind.CONV2D})

SUPPORTED_BITS = (2, 4, 8)
