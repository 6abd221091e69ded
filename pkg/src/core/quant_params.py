from dataclasses import dataclass
from typing import Dict

from .exceptions import FormatError


@dataclass(frozen=True)
class QuantParams:
    """Affine mapping of the real range [beta, alpha] onto signed b-bit integers"""
    bits: int
    beta: float
    alpha: float
    scale: float
    zero_point: int

    @property
    def qmin(self) -> int:
        return -(1 << (self.bits - 1))

    @property
    def qmax(self) -> int:
        return (1 << (self.bits - 1)) - 1

    def to_manifest(self) -> Dict[str, str]:
        # repr() is the shortest string that parses back to the same float
        return {
            'bits': str(self.bits),
            'beta': repr(float(self.beta)),
            'alpha': repr(float(self.alpha)),
            'scale': repr(float(self.scale)),
            'zero_point': str(int(self.zero_point)),
        }

    @classmethod
    def from_manifest(cls, fields: Dict[str, str]) -> 'QuantParams':
        try:
            return cls(
                bits=int(fields['bits']),
                beta=float(fields['beta']),
                alpha=float(fields['alpha']),
                scale=float(fields['scale']),
                zero_point=int(fields['zero_point']),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"Invalid quantization parameters {fields!r}: {e}")
