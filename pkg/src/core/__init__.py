from .config import DEFAULT_CONFIG, load_config
from .data_types import DType, LayerKind, SPLITTABLE_KINDS, SUPPORTED_BITS
from .exceptions import (
    SplitQuantError,
    FormatError,
    CorruptionError,
    ValidationError,
    ContainerIOError,
    DegenerateInputError,
    ArgumentError,
    UnsupportedLayerError,
    ComparisonError,
    ExecutionError,
    ConvergenceError
)
from .graph import LayerSpec, ModelGraph
from .quant_params import QuantParams
from .tensor import Tensor

__all__ = ['DEFAULT_CONFIG', 'load_config', 'DType', 'LayerKind',
           'SPLITTABLE_KINDS', 'SUPPORTED_BITS', 'SplitQuantError',
           'FormatError', 'CorruptionError', 'ValidationError',
           'ContainerIOError', 'DegenerateInputError', 'ArgumentError',
           'UnsupportedLayerError', 'ComparisonError', 'ExecutionError',
           'ConvergenceError', 'LayerSpec', 'ModelGraph', 'QuantParams',
           'Tensor']
