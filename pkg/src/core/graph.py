import copy
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

from .data_types import LayerKind
from .exceptions import FormatError
from .quant_params import QuantParams


@dataclass
class LayerSpec:
    kind: LayerKind
    name: str
    weight_name: Optional[str] = None
    bias_name: Optional[str] = None
    quant: Dict[str, QuantParams] = field(default_factory=dict)
    attrs: Dict[str, int] = field(default_factory=dict)
    children: List['LayerSpec'] = field(default_factory=list)

    def own_tensor_names(self) -> List[str]:
        return [n for n in (self.weight_name, self.bias_name) if n is not None]

    def walk(self) -> Iterator['LayerSpec']:
        """Yield this layer and every nested child, depth first"""
        yield self
        for child in self.children:
            yield from child.walk()

    def tensor_names(self) -> List[str]:
        names = []
        for layer in self.walk():
            names.extend(layer.own_tensor_names())
        return names

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {'kind': self.kind.value, 'name': self.name}
        if self.weight_name is not None:
            doc['weight_name'] = self.weight_name
        if self.bias_name is not None:
            doc['bias_name'] = self.bias_name
        if self.quant:
            doc['quant'] = {k: v.to_manifest() for k, v in self.quant.items()}
        if self.attrs:
            doc['attrs'] = dict(self.attrs)
        if self.children:
            doc['children'] = [c.to_dict() for c in self.children]
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'LayerSpec':
        if not isinstance(doc, dict):
            raise FormatError(f"Layer entry must be an object, got {type(doc).__name__}")
        try:
            kind = LayerKind(doc['kind'])
        except (KeyError, ValueError):
            raise FormatError(f"Layer has missing or unknown kind: {doc.get('kind')!r}")
        attrs = doc.get('attrs', {})
        if not isinstance(attrs, dict) or not all(isinstance(v, int) for v in attrs.values()):
            raise FormatError(f"Layer '{doc.get('name')}' attrs must map names to integers")
        return cls(
            kind=kind,
            name=str(doc.get('name', '')),
            weight_name=doc.get('weight_name'),
            bias_name=doc.get('bias_name'),
            quant={k: QuantParams.from_manifest(v) for k, v in doc.get('quant', {}).items()},
            attrs=dict(attrs),
            children=[cls.from_dict(c) for c in doc.get('children', [])],
        )


@dataclass
class ModelGraph:
    layers: List[LayerSpec] = field(default_factory=list)
    input_shape: Tuple[int, ...] = ()
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)

    def walk(self) -> Iterator[LayerSpec]:
        for layer in self.layers:
            yield from layer.walk()

    def tensor_names(self) -> List[str]:
        """Referenced tensor names in first-use order, without repeats"""
        seen: Dict[str, None] = {}
        for layer in self.layers:
            for name in layer.tensor_names():
                seen.setdefault(name, None)
        return list(seen)

    def copy(self) -> 'ModelGraph':
        return copy.deepcopy(self)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_shape': list(self.input_shape),
            'layers': [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], metadata: Optional[Dict[str, str]] = None) -> 'ModelGraph':
        if not isinstance(doc, dict) or not isinstance(doc.get('layers', []), list):
            raise FormatError("Graph manifest must be an object with a 'layers' list")
        shape = doc.get('input_shape', [])
        if not isinstance(shape, list) or not all(isinstance(d, int) for d in shape):
            raise FormatError(f"Graph input_shape must be a list of integers, got {shape!r}")
        return cls(
            layers=[LayerSpec.from_dict(layer) for layer in doc.get('layers', [])],
            input_shape=tuple(shape),
            metadata=dict(metadata or {}),
        )
