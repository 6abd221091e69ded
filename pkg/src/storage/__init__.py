from .container import load_model, save_model, encode_model, GRAPH_KEY
from .packing import (
    pack_int4,
    unpack_int4,
    pack_int2,
    unpack_int2,
    tensor_to_array,
    array_to_tensor
)
from .validation import validate, infer_shapes, require_valid

__all__ = [
    'load_model',
    'save_model',
    'encode_model',
    'GRAPH_KEY',
    'pack_int4',
    'unpack_int4',
    'pack_int2',
    'unpack_int2',
    'tensor_to_array',
    'array_to_tensor',
    'validate',
    'infer_shapes',
    'require_valid'
]
