"""Per-tensor affine quantization.

    Q(x) = clamp(INT(S*x) + Z, -2^(b-1), 2^(b-1)-1)
    S    = (2^b - 1) / (alpha - beta)
    Z    = -2^(b-1) - INT(S*beta)

INT() rounds to nearest with ties away from zero. Ranges always contain 0,
so Q(0) = Z and zeros dequantize to exactly 0.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.data_types import DType, SUPPORTED_BITS
from core.exceptions import ArgumentError, ComparisonError, DegenerateInputError
from core.graph import ModelGraph
from core.quant_params import QuantParams
from core.tensor import Tensor
from storage.packing import array_to_tensor, tensor_to_array
from storage.validation import require_valid

logger = logging.getLogger(__name__)

TensorTable = Dict[str, Tensor]


@dataclass(frozen=True)
class QuantizedTensor:
    qdata: Tensor
    params: QuantParams
    shape: Tuple[int, ...]

    @property
    def name(self) -> str:
        return self.qdata.name

    def values(self) -> np.ndarray:
        return tensor_to_array(self.qdata)


@dataclass
class TensorErrorReport:
    name: str
    bits: int
    scale: float
    zero_point: int
    beta: float
    alpha: float
    numel: int
    mse: Optional[float]
    max_abs_error: Optional[float]

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Dict) -> 'TensorErrorReport':
        return cls(**doc)


@dataclass
class SizeReport:
    fp32_bytes: int
    stored_bytes: int

    @property
    def ratio(self) -> float:
        return self.stored_bytes / self.fp32_bytes if self.fp32_bytes else 0.0


def check_bits(bits: int) -> int:
    if bits not in SUPPORTED_BITS:
        raise ArgumentError(f"Unsupported bit-width {bits}; choose one of {list(SUPPORTED_BITS)}")
    return bits


def round_half_away(x):
    """Round to nearest integer, ties away from zero"""
    x = np.asarray(x, dtype=np.float64)
    whole = np.trunc(x)
    return whole + np.where(np.abs(x - whole) >= 0.5, np.sign(x), 0.0)


def compute_range(values) -> Tuple[float, float]:
    """(beta, alpha) = (min(0, min x), max(0, max x)); (0.0, 0.0) marks an all-zero tensor"""
    if isinstance(values, Tensor):
        if values.dtype is not DType.F32:
            raise ArgumentError(f"Tensor '{values.name}' is {values.dtype.value}, expected F32")
        values = tensor_to_array(values)
    values = np.asarray(values)
    if values.size == 0:
        raise DegenerateInputError("Cannot compute the range of an empty tensor")
    beta = min(0.0, float(np.min(values)))
    alpha = max(0.0, float(np.max(values)))
    return beta, alpha


def quant_params(beta: float, alpha: float, bits: int) -> QuantParams:
    check_bits(bits)
    if not (np.isfinite(beta) and np.isfinite(alpha)):
        raise ArgumentError(f"Range [{beta}, {alpha}] is not finite")
    if beta > alpha:
        raise ArgumentError(f"Range minimum {beta} exceeds maximum {alpha}")
    if beta > 0.0 or alpha < 0.0:
        raise ArgumentError(f"Range [{beta}, {alpha}] must contain 0")
    if beta == alpha:
        return QuantParams(bits=bits, beta=0.0, alpha=0.0, scale=1.0, zero_point=0)
    scale = ((1 << bits) - 1) / (alpha - beta)
    zero_point = -(1 << (bits - 1)) - int(round_half_away(scale * beta))
    return QuantParams(bits=bits, beta=float(beta), alpha=float(alpha),
                       scale=float(scale), zero_point=zero_point)


def quantize_array(values, params: QuantParams) -> np.ndarray:
    scaled = params.scale * np.asarray(values, dtype=np.float64)
    q = round_half_away(scaled) + params.zero_point
    return np.clip(q, params.qmin, params.qmax).astype(np.int8)


def dequantize_array(q, params: QuantParams, dtype=np.float32) -> np.ndarray:
    return ((np.asarray(q, dtype=np.float64) - params.zero_point) / params.scale).astype(dtype)


def quantize_tensor(tensor: Tensor, bits: int) -> QuantizedTensor:
    check_bits(bits)
    if tensor.dtype is not DType.F32:
        raise ArgumentError(f"Tensor '{tensor.name}' is {tensor.dtype.value}, expected F32")
    values = tensor_to_array(tensor)
    if values.size == 0:
        params = quant_params(0.0, 0.0, bits)
    else:
        params = quant_params(*compute_range(values), bits)
    q = quantize_array(values, params)
    return QuantizedTensor(
        qdata=array_to_tensor(tensor.name, q, DType.for_bits(bits)),
        params=params,
        shape=tensor.shape,
    )


def dequantize_tensor(q: QuantizedTensor) -> Tensor:
    values = dequantize_array(q.values(), q.params)
    return array_to_tensor(q.name, values.reshape(q.shape), DType.F32)


def quantize_model(graph: ModelGraph, tensors: TensorTable, bits: int,
                   threads: int = 1) -> Tuple[ModelGraph, TensorTable]:
    """Quantize every referenced F32 tensor with its own per-tensor parameters"""
    check_bits(bits)
    require_valid(graph, tensors)

    names = graph.tensor_names()
    targets = [n for n in names if tensors[n].dtype is DType.F32]
    for name in names:
        if name not in targets:
            logger.warning("Tensor '%s' is already %s; left as is", name, tensors[name].dtype.value)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = dict(zip(targets, pool.map(lambda n: quantize_tensor(tensors[n], bits), targets)))

    new_tensors = {name: (results[name].qdata if name in results else tensor)
                   for name, tensor in tensors.items()}
    new_graph = graph.copy()
    for layer in new_graph.walk():
        for name in layer.own_tensor_names():
            if name in results:
                layer.quant[name] = results[name].params
    for name, q in results.items():
        logger.info("Quantized '%s' to %d bits: S=%r Z=%d range=[%r, %r]",
                    name, bits, q.params.scale, q.params.zero_point, q.params.beta, q.params.alpha)

    require_valid(new_graph, new_tensors)
    return new_graph, new_tensors


def error_stats(original: Tensor, q: QuantizedTensor) -> TensorErrorReport:
    if tuple(original.shape) != tuple(q.shape):
        raise ComparisonError(f"Shape mismatch for '{original.name}': {list(original.shape)} vs {list(q.shape)}")
    reference = tensor_to_array(original).astype(np.float64)
    restored = dequantize_array(q.values(), q.params).astype(np.float64).reshape(reference.shape)
    error = reference - restored
    mse = float(np.mean(error * error)) if error.size else 0.0
    max_abs = float(np.max(np.abs(error))) if error.size else 0.0
    return _report(q.name, q.params, original.numel, mse, max_abs)


def _report(name: str, params: QuantParams, numel: int,
            mse: Optional[float], max_abs: Optional[float]) -> TensorErrorReport:
    return TensorErrorReport(
        name=name,
        bits=params.bits,
        scale=params.scale,
        zero_point=params.zero_point,
        beta=params.beta,
        alpha=params.alpha,
        numel=numel,
        mse=mse,
        max_abs_error=max_abs,
    )


def quant_params_by_tensor(graph: ModelGraph) -> Dict[str, QuantParams]:
    params: Dict[str, QuantParams] = {}
    for layer in graph.walk():
        params.update(layer.quant)
    return params


def model_error_stats(graph: ModelGraph, tensors: TensorTable,
                      reference: Optional[TensorTable] = None,
                      bits: int = 4) -> List[TensorErrorReport]:
    """Per-tensor statistics.

    Quantized tensors are compared with the same-named F32 tensor of
    ``reference`` when one exists (otherwise only parameters are reported);
    F32 tensors report a simulated round trip at ``bits``.
    """
    check_bits(bits)
    params = quant_params_by_tensor(graph)
    reports = []
    for name in graph.tensor_names():
        tensor = tensors[name]
        if tensor.dtype is DType.F32:
            reports.append(error_stats(tensor, quantize_tensor(tensor, bits)))
            continue
        q = QuantizedTensor(qdata=tensor, params=params[name], shape=tensor.shape)
        original = (reference or {}).get(name)
        if original is not None and original.dtype is DType.F32 and original.shape == tensor.shape:
            reports.append(error_stats(original, q))
        else:
            reports.append(_report(name, q.params, tensor.numel, None, None))
    return reports


def reconstruction_mse(original: np.ndarray, parts: List[QuantizedTensor]) -> float:
    """MSE between a tensor and the sum of its dequantized parts"""
    total = np.zeros(np.shape(original), dtype=np.float64)
    for part in parts:
        total += dequantize_array(part.values(), part.params).astype(np.float64).reshape(total.shape)
    error = np.asarray(original, dtype=np.float64) - total
    return float(np.mean(error * error)) if error.size else 0.0


def model_size_report(tensors: TensorTable, reference: Optional[TensorTable] = None) -> SizeReport:
    """Stored bytes against the FP32 size of ``reference`` (defaults to the model itself)"""
    baseline = reference if reference is not None else tensors
    return SizeReport(
        fp32_bytes=sum(4 * t.numel for t in baseline.values()),
        stored_bytes=sum(len(t.data) for t in tensors.values()),
    )


def float_values(tensor: Tensor, params: Optional[QuantParams] = None) -> np.ndarray:
    """Tensor values as float32, dequantizing packed integer payloads"""
    if tensor.dtype is DType.F32:
        return tensor_to_array(tensor)
    if params is None:
        raise ArgumentError(f"Tensor '{tensor.name}' is {tensor.dtype.value} but has no quantization parameters")
    return dequantize_array(tensor_to_array(tensor), params).reshape(tensor.shape)
