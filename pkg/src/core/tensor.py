from dataclasses import dataclass
from math import prod
from typing import List, Tuple

from .data_types import DType


@dataclass(frozen=True)
class Tensor:
    """Named dense tensor with a little-endian row-major payload"""
    name: str
    dtype: DType
    shape: Tuple[int, ...]
    data: bytes

    def __post_init__(self):
        object.__setattr__(self, 'shape', tuple(int(d) for d in self.shape))
        object.__setattr__(self, 'data', bytes(self.data))

    @property
    def numel(self) -> int:
        return prod(self.shape)

    @property
    def expected_nbytes(self) -> int:
        return self.dtype.nbytes(self.numel)

    def violations(self) -> List[str]:
        problems = []
        if any(d < 0 for d in self.shape):
            problems.append(f"tensor '{self.name}': negative extent in shape {list(self.shape)}")
        elif len(self.data) != self.expected_nbytes:
            problems.append(
                f"tensor '{self.name}': payload is {len(self.data)} bytes, "
                f"{self.dtype.value}{list(self.shape)} needs {self.expected_nbytes}"
            )
        return problems
