"""Small hand-built models shared by the test modules."""
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from core.data_types import LayerKind
from core.graph import LayerSpec, ModelGraph
from core.tensor import Tensor
from storage.packing import array_to_tensor


def linear(name: str, weight, bias=None, tensors: Optional[Dict[str, Tensor]] = None,
           **attrs) -> Tuple[LayerSpec, Dict[str, Tensor]]:
    tensors = {} if tensors is None else tensors
    tensors[f"{name}.weight"] = array_to_tensor(f"{name}.weight", np.asarray(weight, dtype=np.float32))
    bias_name = None
    if bias is not None:
        bias_name = f"{name}.bias"
        tensors[bias_name] = array_to_tensor(bias_name, np.asarray(bias, dtype=np.float32))
    layer = LayerSpec(kind=LayerKind.LINEAR, name=name, weight_name=f"{name}.weight",
                      bias_name=bias_name, attrs=dict(attrs))
    return layer, tensors


def random_mlp(dims: Sequence[int], seed: int = 0) -> Tuple[ModelGraph, Dict[str, Tensor]]:
    rng = np.random.default_rng(seed)
    tensors: Dict[str, Tensor] = {}
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        if i:
            layers.append(LayerSpec(kind=LayerKind.RELU, name=f"relu{i}"))
        layer, _ = linear(f"fc{i + 1}", rng.normal(0, 0.5, (fan_out, fan_in)),
                          rng.normal(0, 0.1, fan_out), tensors)
        layers.append(layer)
    return ModelGraph(layers=layers, input_shape=(dims[0],)), tensors
