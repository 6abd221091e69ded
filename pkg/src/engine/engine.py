import logging
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from core.data_types import LayerKind
from core.exceptions import ComparisonError, ExecutionError
from core.graph import LayerSpec, ModelGraph
from core.tensor import Tensor
from quant.quantizer import float_values, quant_params_by_tensor
from storage.validation import require_valid
from . import kernels

logger = logging.getLogger(__name__)

TensorTable = Dict[str, Tensor]
Model = Tuple[ModelGraph, TensorTable]


@dataclass(frozen=True, eq=False)
class Activation:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if not np.all(np.isfinite(values)):
            raise ExecutionError("activation holds non-finite values")
        object.__setattr__(self, 'values', values)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)


@dataclass
class AgreementReport:
    max_deviation: float
    agreement: float
    count: int

    def to_dict(self) -> Dict:
        return {'max_deviation': self.max_deviation, 'agreement': self.agreement, 'count': self.count}


class InferenceEngine:
    """Runs a validated model; quantized tensors are dequantized on first use.

    Safe to share between threads: the model is never mutated and the
    dequantized weight cache is guarded by a lock.
    """
    def __init__(self, graph: ModelGraph, tensors: TensorTable, validate: bool = True):
        if validate:
            require_valid(graph, tensors)
        self._graph = graph
        self._tensors = tensors
        self._params = quant_params_by_tensor(graph)
        self._cache: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._handlers = {
            LayerKind.LINEAR: self._linear,
            LayerKind.CONV2D: self._conv2d,
            LayerKind.EMBEDDING: self._embedding,
            LayerKind.LAYERNORM: self._layernorm,
            LayerKind.RELU: self._relu,
            LayerKind.GELU: self._gelu,
            LayerKind.SOFTMAX_ATTENTION: self._attention,
            LayerKind.SPLIT_SUM: self._split_sum,
        }

    @property
    def graph(self) -> ModelGraph:
        return self._graph

    def weights(self, name: Optional[str]) -> Optional[np.ndarray]:
        if name is None:
            return None
        with self._lock:
            cached = self._cache.get(name)
            if cached is None:
                cached = float_values(self._tensors[name], self._params.get(name))
                self._cache[name] = cached
        return cached

    def run(self, x: np.ndarray, batched: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        sample_shape = x.shape[1:] if batched else x.shape
        if tuple(sample_shape) != self._graph.input_shape:
            raise ExecutionError(f"input shape {list(sample_shape)} does not match "
                                 f"graph input shape {list(self._graph.input_shape)}")
        if not np.all(np.isfinite(x)):
            raise ExecutionError("input holds non-finite values")
        lead = 1 if batched else 0
        for layer in self._graph.layers:
            x = self._apply(layer, x, lead)
        return x

    def _apply(self, layer: LayerSpec, x: np.ndarray, lead: int) -> np.ndarray:
        try:
            out = self._handlers[layer.kind](layer, x, lead)
        except ExecutionError:
            raise
        except (ValueError, IndexError) as e:
            raise ExecutionError(str(e), layer=layer.name)
        if not np.all(np.isfinite(out)):
            raise ExecutionError("non-finite intermediate values", layer=layer.name)
        return out

    # -- layer handlers ------------------------------------------------------

    def _linear(self, layer, x, lead):
        if layer.attrs.get('flatten', 0):
            x = x.reshape(x.shape[:lead] + (-1,))
        weight = self.weights(layer.weight_name)
        if x.shape[-1] != weight.shape[1]:
            raise ExecutionError(f"input extent {x.shape[-1]} does not match weight {list(weight.shape)}",
                                 layer=layer.name)
        return kernels.linear(x, weight, self.weights(layer.bias_name))

    def _conv2d(self, layer, x, lead):
        return kernels.conv2d(x, self.weights(layer.weight_name), self.weights(layer.bias_name),
                              stride=layer.attrs.get('stride', 1),
                              padding=layer.attrs.get('padding', 0))

    def _embedding(self, layer, x, lead):
        return kernels.embedding(x, self.weights(layer.weight_name))

    def _layernorm(self, layer, x, lead):
        return kernels.layernorm(x, self.weights(layer.weight_name), self.weights(layer.bias_name))

    def _relu(self, layer, x, lead):
        return kernels.relu(x)

    def _gelu(self, layer, x, lead):
        return kernels.gelu(x)

    def _attention(self, layer, x, lead):
        def project(i, h):
            return self._apply(layer.children[i], h, lead)
        return kernels.attention(x, project, head_dim=layer.attrs['head_dim'],
                                 causal=bool(layer.attrs.get('causal', 0)))

    def _split_sum(self, layer, x, lead):
        # children summed in order 0, 1, 2
        total = None
        for child in layer.children:
            out = self._apply(child, x, lead)
            total = out if total is None else total + out
        return total


def forward(graph: ModelGraph, tensors: TensorTable, input) -> Activation:
    """Single-sample forward pass"""
    values = input.values if isinstance(input, Activation) else input
    return Activation(InferenceEngine(graph, tensors).run(values))


def forward_batch(graph: ModelGraph, tensors: TensorTable, inputs: np.ndarray) -> np.ndarray:
    """Forward pass over ``inputs[N, *input_shape]``"""
    return InferenceEngine(graph, tensors).run(inputs, batched=True)


def predict(outputs: np.ndarray) -> np.ndarray:
    """Argmax over the last extent of each sample's final output row"""
    outputs = np.asarray(outputs)
    rows = outputs.reshape(outputs.shape[0], -1, outputs.shape[-1])
    return np.argmax(rows[:, -1, :], axis=-1)


def batch_agreement(model_a: Model, model_b: Model, inputs: np.ndarray) -> AgreementReport:
    """Max absolute output deviation and prediction agreement of two models"""
    inputs = np.asarray(inputs, dtype=np.float32)
    if inputs.shape[0] == 0:
        return AgreementReport(max_deviation=0.0, agreement=1.0, count=0)
    out_a = forward_batch(*model_a, inputs)
    out_b = forward_batch(*model_b, inputs)
    if out_a.shape != out_b.shape:
        raise ComparisonError(f"Output shapes differ: {list(out_a.shape)} vs {list(out_b.shape)}")
    deviation = float(np.max(np.abs(out_a.astype(np.float64) - out_b.astype(np.float64))))
    agreement = float(np.mean(predict(out_a) == predict(out_b)))
    logger.info("Compared %d inputs: max deviation %g, agreement %.4f", inputs.shape[0], deviation, agreement)
    return AgreementReport(max_deviation=deviation, agreement=agreement, count=int(inputs.shape[0]))
