"""Function-preserving split of linear/conv2d layers into three cluster sublayers.

Each sublayer keeps the original values whose cluster label matches and holds
zeros elsewhere; the split_sum of the three outputs equals the original output.
Structural zeros carry the sign of the original element so that summing the
sublayer tensors reproduces the original bits, including ``-0.0``.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.data_types import DType, LayerKind, SPLITTABLE_KINDS
from core.exceptions import (
    ArgumentError,
    ComparisonError,
    DegenerateInputError,
    UnsupportedLayerError
)
from core.graph import LayerSpec, ModelGraph
from core.tensor import Tensor
from storage.packing import array_to_tensor, tensor_to_array
from storage.validation import require_valid
from .clustering import ClusterAssignment, K, kmeans3
from .quantizer import float_values, quant_params_by_tensor

logger = logging.getLogger(__name__)

TensorTable = Dict[str, Tensor]
DEFAULT_MIN_ELEMS = 16


def sublayer_name(name: str, index: int) -> str:
    return f"{name}.split{index}"


@dataclass(frozen=True, eq=False)
class SplitPlan:
    layer_id: str
    assignment: ClusterAssignment
    sublayer_names: Tuple[Tuple[str, Optional[str]], ...]
    original_range: float
    sublayer_ranges: Tuple[float, float, float]

    @property
    def narrowing(self) -> Tuple[float, ...]:
        """Original value range over each sublayer's range of nonzero values"""
        return tuple(self.original_range / r if r > 0 else float('inf')
                     for r in self.sublayer_ranges)

    def summary(self) -> Dict:
        return {
            'layer': self.layer_id,
            'centroids': list(self.assignment.centroids),
            'boundaries': list(self.assignment.boundaries),
            'counts': list(self.assignment.counts),
            'original_range': self.original_range,
            'sublayer_ranges': list(self.sublayer_ranges),
            'narrowing': list(self.narrowing),
        }


@dataclass
class SplitResult:
    layer: LayerSpec
    tensors: TensorTable = field(default_factory=dict)
    plan: Optional[SplitPlan] = None

    @property
    def was_split(self) -> bool:
        return self.plan is not None


@dataclass
class SplitModelResult:
    graph: ModelGraph
    tensors: TensorTable
    plans: List[SplitPlan]


@dataclass
class _Partition:
    tensors: TensorTable
    assignment: ClusterAssignment
    names: Tuple[Tuple[str, Optional[str]], ...]
    original_range: float
    sublayer_ranges: Tuple[float, float, float]

    def plan(self, layer_id: str) -> SplitPlan:
        return SplitPlan(layer_id, self.assignment, self.names,
                         self.original_range, self.sublayer_ranges)


def _value_range(values: np.ndarray) -> float:
    return float(values.max()) - float(values.min()) if values.size else 0.0


def _check_splittable(layer: LayerSpec, weight: Tensor, bias: Optional[Tensor]) -> None:
    if layer.kind not in SPLITTABLE_KINDS:
        raise UnsupportedLayerError(layer.kind.value, 'split_layer')
    for tensor in (weight, bias):
        if tensor is not None and tensor.dtype is not DType.F32:
            raise ArgumentError(f"Tensor '{tensor.name}' is {tensor.dtype.value}; split before quantizing")


def _partition(weight: Tensor, bias: Optional[Tensor], min_elems: int,
               max_iter: int, tol: float) -> Optional[_Partition]:
    w = tensor_to_array(weight)
    b = tensor_to_array(bias) if bias is not None else np.zeros(0, dtype=np.float32)
    values = np.concatenate([w.ravel(), b.ravel()])
    if not np.all(np.isfinite(values)):
        raise ArgumentError(f"Tensor '{weight.name}' or its bias holds non-finite values")
    if values.size < min_elems:
        logger.warning("Not splitting '%s': %d elements < %d", weight.name, values.size, min_elems)
        return None
    try:
        assignment = kmeans3(values, max_iter=max_iter, tol=tol)
    except DegenerateInputError as e:
        logger.warning("Not splitting '%s': %s", weight.name, e)
        return None

    labels = assignment.labels
    parts = [(weight, w, labels[:w.size].reshape(w.shape))]
    if bias is not None:
        parts.append((bias, b, labels[w.size:]))

    tensors: TensorTable = {}
    for source, array, source_labels in parts:
        structural_zero = np.copysign(np.zeros_like(array), array)
        for i in range(K):
            name = sublayer_name(source.name, i)
            tensors[name] = array_to_tensor(name, np.where(source_labels == i, array, structural_zero))

    ranges = []
    for i in range(K):
        members = values[(labels == i) & (values != 0)]
        ranges.append(_value_range(members))

    names = tuple((sublayer_name(weight.name, i),
                   sublayer_name(bias.name, i) if bias is not None else None)
                  for i in range(K))
    return _Partition(tensors, assignment, names, _value_range(values), tuple(ranges))


def _split_spec(layer: LayerSpec, names: Tuple[Tuple[str, Optional[str]], ...]) -> LayerSpec:
    children = [
        LayerSpec(kind=layer.kind, name=sublayer_name(layer.name, i),
                  weight_name=w_name, bias_name=b_name, attrs=dict(layer.attrs))
        for i, (w_name, b_name) in enumerate(names)
    ]
    return LayerSpec(kind=LayerKind.SPLIT_SUM, name=layer.name, children=children)


def split_layer(layer: LayerSpec, weight: Tensor, bias: Optional[Tensor] = None,
                min_elems: int = DEFAULT_MIN_ELEMS, max_iter: int = 100,
                tol: float = 1e-6) -> SplitResult:
    """Replace one linear/conv2d layer by a split_sum of lower/middle/upper sublayers.

    Returns the layer unchanged (``plan`` None) when its values are degenerate
    or fewer than ``min_elems``.
    """
    _check_splittable(layer, weight, bias)
    part = _partition(weight, bias, min_elems, max_iter, tol)
    if part is None:
        return SplitResult(layer=layer)
    return SplitResult(layer=_split_spec(layer, part.names), tensors=part.tensors,
                       plan=part.plan(layer.name))


def _split_targets(layers: List[LayerSpec]) -> List[LayerSpec]:
    targets = []
    for layer in layers:
        if layer.kind in SPLITTABLE_KINDS:
            targets.append(layer)
        elif layer.kind is LayerKind.SOFTMAX_ATTENTION:
            targets.extend(_split_targets(layer.children))
        elif layer.kind is LayerKind.SPLIT_SUM:
            logger.warning("Layer '%s' is already split; not splitting again", layer.name)
    return targets


def split_model(graph: ModelGraph, tensors: TensorTable, min_elems: int = DEFAULT_MIN_ELEMS,
                threads: int = 1, max_iter: int = 100, tol: float = 1e-6) -> SplitModelResult:
    """Split every eligible linear/conv2d layer, including attention Q/K/V/O projections.

    Embeddings, normalization, activations and existing split_sum layers are
    left untouched. Layers sharing the same weight/bias tensors are split once.
    """
    require_valid(graph, tensors)
    new_graph = graph.copy()
    targets = _split_targets(new_graph.layers)

    keys: Dict[Tuple[str, Optional[str]], None] = {}
    for layer in targets:
        _check_splittable(layer, tensors[layer.weight_name],
                          tensors[layer.bias_name] if layer.bias_name else None)
        keys.setdefault((layer.weight_name, layer.bias_name), None)

    def run(key):
        w_name, b_name = key
        return _partition(tensors[w_name], tensors[b_name] if b_name else None,
                          min_elems, max_iter, tol)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        partitions = dict(zip(keys, pool.map(run, list(keys))))

    produced: Dict[str, Tensor] = {}
    for part in partitions.values():
        if part is None:
            continue
        for name, tensor in part.tensors.items():
            if name in produced or name in tensors:
                raise ArgumentError(f"Sublayer tensor name '{name}' collides with an existing tensor")
            produced[name] = tensor

    replacements: Dict[int, LayerSpec] = {}
    plans: List[SplitPlan] = []
    for layer in targets:
        part = partitions[(layer.weight_name, layer.bias_name)]
        if part is None:
            continue
        replacements[id(layer)] = _split_spec(layer, part.names)
        plans.append(part.plan(layer.name))
        logger.info("Split '%s': boundaries %s, counts %s", layer.name,
                    part.assignment.boundaries, part.assignment.counts)

    new_graph.layers = _rewrite(new_graph.layers, replacements)

    # originals stay only while something (e.g. a tied embedding) still references them
    referenced = set(new_graph.tensor_names())
    consumed = {name for key, part in partitions.items() if part is not None for name in key if name}
    new_tensors: TensorTable = {}
    for name, tensor in tensors.items():
        if name not in consumed or name in referenced:
            new_tensors[name] = tensor
        if name in consumed:
            for i in range(K):
                child = sublayer_name(name, i)
                if child in produced:
                    new_tensors[child] = produced[child]

    require_valid(new_graph, new_tensors)
    logger.info("%d layers split", len(plans))
    return SplitModelResult(graph=new_graph, tensors=new_tensors, plans=plans)


def _rewrite(layers: List[LayerSpec], replacements: Dict[int, LayerSpec]) -> List[LayerSpec]:
    rewritten = []
    for layer in layers:
        if id(layer) in replacements:
            rewritten.append(replacements[id(layer)])
            continue
        if layer.kind is LayerKind.SOFTMAX_ATTENTION:
            layer.children = _rewrite(layer.children, replacements)
        rewritten.append(layer)
    return rewritten


# -- equivalence checking ------------------------------------------------------

@dataclass
class SplitCheckReport:
    reconstruction_exact: bool
    mismatches: List[str]
    layers_checked: int
    max_deviation: Optional[float] = None
    agreement: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'reconstruction_exact': self.reconstruction_exact,
            'mismatches': list(self.mismatches),
            'layers_checked': self.layers_checked,
            'max_deviation': self.max_deviation,
            'agreement': self.agreement,
        }


def _bits_equal(a: np.ndarray, b: np.ndarray) -> bool:
    a = np.ascontiguousarray(a, dtype=np.float32)
    b = np.ascontiguousarray(b, dtype=np.float32)
    return a.shape == b.shape and np.array_equal(a.view(np.uint32), b.view(np.uint32))


class _Reconstruction:
    def __init__(self, original: Tuple[ModelGraph, TensorTable], split: Tuple[ModelGraph, TensorTable]):
        self._a_tensors = original[1]
        self._b_tensors = split[1]
        self._a_params = quant_params_by_tensor(original[0])
        self._b_params = quant_params_by_tensor(split[0])
        self.mismatches: List[str] = []
        self.checked = 0

    def _values(self, side: str, name: str) -> np.ndarray:
        tensors, params = ((self._a_tensors, self._a_params) if side == 'a'
                           else (self._b_tensors, self._b_params))
        if name not in tensors:
            raise ComparisonError(f"Tensor '{name}' missing from the {'original' if side == 'a' else 'split'} model")
        return float_values(tensors[name], params.get(name))

    def compare(self, a: LayerSpec, b: LayerSpec) -> None:
        if b.kind is LayerKind.SPLIT_SUM and a.kind in SPLITTABLE_KINDS:
            if any(child.kind is not a.kind for child in b.children):
                raise ComparisonError(f"Split layer '{b.name}' does not match kind of '{a.name}'")
            self._check_sum(a, b)
            return
        if a.kind is not b.kind or len(a.children) != len(b.children):
            raise ComparisonError(f"Layer '{a.name}' ({a.kind.value}) cannot be compared "
                                  f"with '{b.name}' ({b.kind.value})")
        for child_a, child_b in zip(a.children, b.children):
            self.compare(child_a, child_b)
        for name_a, name_b in ((a.weight_name, b.weight_name), (a.bias_name, b.bias_name)):
            if (name_a is None) != (name_b is None):
                raise ComparisonError(f"Layer '{a.name}' and '{b.name}' differ in weight/bias presence")
            if name_a is not None:
                self.checked += 1
                if not _bits_equal(self._values('a', name_a), self._values('b', name_b)):
                    self.mismatches.append(f"{b.name}:{name_b}")

    def _check_sum(self, a: LayerSpec, b: LayerSpec) -> None:
        for attr in ('weight_name', 'bias_name'):
            name_a = getattr(a, attr)
            child_names = [getattr(child, attr) for child in b.children]
            if name_a is None:
                if any(n is not None for n in child_names):
                    self.mismatches.append(f"{b.name}: sublayers carry a {attr[:-5]} the original lacks")
                continue
            if any(n is None for n in child_names):
                self.mismatches.append(f"{b.name}: sublayers are missing the {attr[:-5]}")
                continue
            self.checked += 1
            total = None
            for name in child_names:
                part = self._values('b', name)
                total = part if total is None else total + part
            if not _bits_equal(total, self._values('a', name_a)):
                self.mismatches.append(f"{b.name}:{name_a}")


def unsplit_check(original: Tuple[ModelGraph, TensorTable], split: Tuple[ModelGraph, TensorTable],
                  inputs: Optional[np.ndarray] = None) -> SplitCheckReport:
    """Check that split sublayers sum bit-exactly to the originals and, given
    an input batch, measure the forward-output deviation"""
    graph_a, graph_b = original[0], split[0]
    if len(graph_a.layers) != len(graph_b.layers) or graph_a.input_shape != graph_b.input_shape:
        raise ComparisonError("Models differ in layer count or input shape")

    checker = _Reconstruction(original, split)
    for a, b in zip(graph_a.layers, graph_b.layers):
        checker.compare(a, b)
    report = SplitCheckReport(
        reconstruction_exact=not checker.mismatches,
        mismatches=checker.mismatches,
        layers_checked=checker.checked,
    )
    if inputs is not None:
        from engine.engine import batch_agreement
        agreement = batch_agreement(original, split, inputs)
        report.max_deviation = agreement.max_deviation
        report.agreement = agreement.agreement
    return report
