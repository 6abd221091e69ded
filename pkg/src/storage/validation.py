from math import prod
from typing import Dict, List, Optional, Tuple

from core.data_types import LayerKind, SPLITTABLE_KINDS, SUPPORTED_BITS
from core.exceptions import ValidationError
from core.graph import LayerSpec, ModelGraph
from core.tensor import Tensor

Shape = Tuple[int, ...]

ATTENTION_CHILDREN = ('q', 'k', 'v', 'o')


class GraphChecker:
    """Walks a graph once, propagating activation shapes and collecting violations"""
    def __init__(self, tensors: Dict[str, Tensor]):
        self._tensors = tensors
        self.problems: List[str] = []
        self.output_shapes: List[Tuple[str, Shape]] = []

    def check(self, graph: ModelGraph) -> List[str]:
        for key, tensor in self._tensors.items():
            if key != tensor.name:
                self.problems.append(f"tensor table key '{key}' holds tensor named '{tensor.name}'")
            self.problems.extend(tensor.violations())

        for key, value in graph.metadata.items():
            if not isinstance(key, str) or not isinstance(value, str):
                self.problems.append(f"metadata entry {key!r} must map a string to a string")

        shape: Optional[Shape] = tuple(graph.input_shape)
        if any(d < 0 for d in shape):
            self.problems.append(f"graph input_shape {list(shape)} has a negative extent")
            shape = None

        for layer in graph.layers:
            out = self._layer(layer, shape)
            if out is not None:
                self.output_shapes.append((layer.name, out))
            shape = out
        return self.problems

    # -- helpers -----------------------------------------------------------

    def _fail(self, layer: LayerSpec, message: str) -> None:
        self.problems.append(f"layer '{layer.name}' ({layer.kind.value}): {message}")

    def _resolve(self, layer: LayerSpec, name: Optional[str]) -> Optional[Tensor]:
        if name is None:
            return None
        tensor = self._tensors.get(name)
        if tensor is None:
            self._fail(layer, f"dangling tensor reference '{name}'")
        return tensor

    def _check_quant(self, layer: LayerSpec, tensors: List[Tensor]) -> None:
        owned = {t.name: t for t in tensors}
        for name in layer.quant:
            if name not in owned and name not in layer.own_tensor_names():
                self._fail(layer, f"quantization parameters for unreferenced tensor '{name}'")
        for tensor in tensors:
            params = layer.quant.get(tensor.name)
            if tensor.dtype.is_quantized:
                if params is None:
                    self._fail(layer, f"quantized tensor '{tensor.name}' has no quantization parameters")
                elif params.bits != tensor.dtype.bits:
                    self._fail(layer, f"tensor '{tensor.name}' is {tensor.dtype.value} "
                                      f"but parameters record {params.bits} bits")
            elif params is not None:
                self._fail(layer, f"tensor '{tensor.name}' is F32 but has quantization parameters")
            if params is None:
                continue
            if params.bits not in SUPPORTED_BITS:
                self._fail(layer, f"unsupported bit-width {params.bits} for '{tensor.name}'")
            elif not (params.beta <= 0.0 <= params.alpha) or not params.scale > 0.0:
                self._fail(layer, f"invalid range/scale for '{tensor.name}'")
            elif not params.qmin <= params.zero_point <= params.qmax:
                self._fail(layer, f"zero-point {params.zero_point} out of range for '{tensor.name}'")

    def _layer(self, layer: LayerSpec, shape: Optional[Shape]) -> Optional[Shape]:
        handlers = {
            LayerKind.LINEAR: self._linear,
            LayerKind.CONV2D: self._conv2d,
            LayerKind.EMBEDDING: self._embedding,
            LayerKind.LAYERNORM: self._layernorm,
            LayerKind.RELU: self._elementwise,
            LayerKind.GELU: self._elementwise,
            LayerKind.SOFTMAX_ATTENTION: self._attention,
            LayerKind.SPLIT_SUM: self._split_sum,
        }
        if layer.children and layer.kind not in (LayerKind.SPLIT_SUM, LayerKind.SOFTMAX_ATTENTION):
            self._fail(layer, "only split_sum and softmax_attention layers may have children")

        weight = self._resolve(layer, layer.weight_name)
        bias = self._resolve(layer, layer.bias_name)
        if (layer.weight_name and weight is None) or (layer.bias_name and bias is None):
            return None
        self._check_quant(layer, [t for t in (weight, bias) if t is not None])
        return handlers[layer.kind](layer, shape, weight, bias)

    def _require_no_tensors(self, layer: LayerSpec, weight, bias) -> bool:
        if weight is not None or bias is not None:
            self._fail(layer, "layer kind takes no weight or bias tensors")
            return False
        return True

    def _check_bias(self, layer: LayerSpec, bias: Optional[Tensor], extent: int) -> bool:
        if bias is not None and bias.shape != (extent,):
            self._fail(layer, f"bias '{bias.name}' has shape {list(bias.shape)}, expected [{extent}]")
            return False
        return True

    # -- per-kind rules ------------------------------------------------------

    def _linear(self, layer, shape, weight, bias) -> Optional[Shape]:
        if weight is None or len(weight.shape) != 2:
            self._fail(layer, "linear layer needs a 2-D [out, in] weight")
            return None
        out_features, in_features = weight.shape
        if not self._check_bias(layer, bias, out_features) or shape is None:
            return None
        if layer.attrs.get('flatten', 0):
            if prod(shape) != in_features:
                self._fail(layer, f"flattened input has {prod(shape)} features, weight expects {in_features}")
                return None
            return (out_features,)
        if not shape or shape[-1] != in_features:
            self._fail(layer, f"input shape {list(shape)} incompatible with weight input extent {in_features}")
            return None
        return shape[:-1] + (out_features,)

    def _conv2d(self, layer, shape, weight, bias) -> Optional[Shape]:
        if weight is None or len(weight.shape) != 4:
            self._fail(layer, "conv2d layer needs a 4-D [out, in, kh, kw] weight")
            return None
        out_channels, in_channels, kh, kw = weight.shape
        stride = layer.attrs.get('stride', 1)
        padding = layer.attrs.get('padding', 0)
        if stride < 1 or padding < 0:
            self._fail(layer, f"invalid stride {stride} / padding {padding}")
            return None
        if not self._check_bias(layer, bias, out_channels) or shape is None:
            return None
        if len(shape) != 3 or shape[0] != in_channels:
            self._fail(layer, f"input shape {list(shape)} incompatible with [{in_channels}, H, W]")
            return None
        height = (shape[1] + 2 * padding - kh) // stride + 1
        width = (shape[2] + 2 * padding - kw) // stride + 1
        if height < 1 or width < 1:
            self._fail(layer, f"kernel {kh}x{kw} larger than padded input {list(shape[1:])}")
            return None
        return (out_channels, height, width)

    def _embedding(self, layer, shape, weight, bias) -> Optional[Shape]:
        if weight is None or len(weight.shape) != 2:
            self._fail(layer, "embedding layer needs a 2-D [vocab, dim] weight")
            return None
        if bias is not None:
            self._fail(layer, "embedding layer takes no bias")
            return None
        if weight.shape[0] < 1:
            self._fail(layer, "embedding table is empty")
            return None
        return None if shape is None else shape + (weight.shape[1],)

    def _layernorm(self, layer, shape, weight, bias) -> Optional[Shape]:
        if weight is None or len(weight.shape) != 1:
            self._fail(layer, "layernorm layer needs a 1-D gamma weight")
            return None
        extent = weight.shape[0]
        if not self._check_bias(layer, bias, extent) or shape is None:
            return None
        if not shape or shape[-1] != extent:
            self._fail(layer, f"input shape {list(shape)} incompatible with normalized extent {extent}")
            return None
        return shape

    def _elementwise(self, layer, shape, weight, bias) -> Optional[Shape]:
        if not self._require_no_tensors(layer, weight, bias):
            return None
        return shape

    def _attention(self, layer, shape, weight, bias) -> Optional[Shape]:
        if not self._require_no_tensors(layer, weight, bias):
            return None
        if len(layer.children) != len(ATTENTION_CHILDREN):
            self._fail(layer, f"softmax_attention needs {len(ATTENTION_CHILDREN)} children "
                              f"(q, k, v, o), has {len(layer.children)}")
            return None
        for child in layer.children:
            if not _is_linear_like(child) or child.attrs.get('flatten', 0):
                self._fail(layer, f"attention projection '{child.name}' must be a linear (or split linear) layer")
                return None
        head_dim = layer.attrs.get('head_dim', 0)
        if shape is None:
            return None
        if len(shape) != 2:
            self._fail(layer, f"input shape {list(shape)} must be [seq, d_model]")
            return None
        q, k, v, o = layer.children
        projected = [self._layer(child, shape) for child in (q, k, v)]
        if any(p is None for p in projected):
            return None
        if any(p[-1] != head_dim for p in projected):
            self._fail(layer, f"q/k/v output extents {[p[-1] for p in projected]} must equal head_dim {head_dim}")
            return None
        return self._layer(o, projected[2])

    def _split_sum(self, layer, shape, weight, bias) -> Optional[Shape]:
        if not self._require_no_tensors(layer, weight, bias):
            return None
        if len(layer.children) != 3:
            self._fail(layer, f"split_sum must have exactly 3 children, has {len(layer.children)}")
        if not layer.children:
            return None
        kinds = {child.kind for child in layer.children}
        if len(kinds) != 1 or not kinds <= SPLITTABLE_KINDS:
            self._fail(layer, f"split_sum children must share one kind of linear/conv2d, "
                              f"got {sorted(k.value for k in kinds)}")
            return None
        signatures = set()
        for child in layer.children:
            w = self._tensors.get(child.weight_name) if child.weight_name else None
            b = self._tensors.get(child.bias_name) if child.bias_name else None
            signatures.add((w.shape if w else None, b.shape if b else None,
                            tuple(sorted(child.attrs.items()))))
        if len(signatures) != 1:
            self._fail(layer, "split_sum children must have identical weight/bias shapes and attributes")
            return None
        outputs = [self._layer(child, shape) for child in layer.children]
        if any(out is None for out in outputs):
            return None
        return outputs[0]


def _is_linear_like(layer: LayerSpec) -> bool:
    if layer.kind is LayerKind.LINEAR:
        return True
    return (layer.kind is LayerKind.SPLIT_SUM
            and all(c.kind is LayerKind.LINEAR for c in layer.children))


def validate(graph: ModelGraph, tensors: Dict[str, Tensor]) -> List[str]:
    """Return every invariant violation; empty iff the model is well-formed"""
    return GraphChecker(tensors).check(graph)


def infer_shapes(graph: ModelGraph, tensors: Dict[str, Tensor]) -> List[Tuple[str, Shape]]:
    """Per top-level layer output shapes; raises ValidationError on an invalid model"""
    checker = GraphChecker(tensors)
    problems = checker.check(graph)
    if problems:
        raise ValidationError(problems)
    return checker.output_shapes


def require_valid(graph: ModelGraph, tensors: Dict[str, Tensor]) -> None:
    problems = validate(graph, tensors)
    if problems:
        raise ValidationError(problems)
