"""Seeded synthetic tensors, desk-scale models and self-labeled datasets.

All randomness comes from ``numpy.random.Generator(PCG64(seed))`` so the same
seed yields bit-identical tensors on every platform.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from core.data_types import LayerKind
from core.exceptions import ArgumentError, DegenerateInputError
from core.graph import LayerSpec, ModelGraph
from core.tensor import Tensor
from engine.engine import InferenceEngine, predict
from storage.packing import array_to_tensor

logger = logging.getLogger(__name__)

TensorTable = Dict[str, Tensor]

MAX_OUTLIER_FRAC = 0.05
MLP_DIMS = (16, 64, 4)              # in, hidden, classes
TABLE_MLP_DIMS = (16, 64, 64, 4)    # accuracy-table benchmark
ATTN_DIMS = (32, 16, 4, 8)          # vocab, d_model, classes, seq
CANDIDATE_CHUNK = 4096
CANDIDATE_SEED_STRIDE = 7919
DEFAULT_POOL = 16
BALANCE_BATCH = 4096
BALANCE_ROUNDS = 16


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def outlier_count(n: int, outlier_frac: float) -> int:
    """ceil(n * outlier_frac), computed exactly on the fraction's shortest
    decimal form so binary rounding of the product can never add one"""
    return math.ceil(n * Fraction(repr(float(outlier_frac))))


def gen_outlier_tensor(n: int, bulk_sigma: float = 0.05, outlier_frac: float = 0.002,
                       outlier_mag: float = 1.0, seed: int = 0,
                       shape: Optional[Sequence[int]] = None, name: str = 'weight') -> Tensor:
    """Normal bulk scaled by ``bulk_sigma`` with ceil(n * outlier_frac) values
    replaced by +outlier_mag, -outlier_mag, +outlier_mag, ... at random positions"""
    if n < 0:
        raise ArgumentError(f"Element count must be >= 0, got {n}")
    if not 0.0 <= outlier_frac <= MAX_OUTLIER_FRAC:
        raise ArgumentError(f"outlier_frac must lie in [0, {MAX_OUTLIER_FRAC}], got {outlier_frac}")
    if bulk_sigma < 0:
        raise ArgumentError(f"bulk_sigma must be >= 0, got {bulk_sigma}")
    shape = (n,) if shape is None else tuple(int(d) for d in shape)
    if math.prod(shape) != n:
        raise ArgumentError(f"Shape {list(shape)} does not hold {n} elements")

    rng = rng_for(seed)
    values = rng.standard_normal(n) * bulk_sigma
    count = outlier_count(n, outlier_frac)
    if count:
        positions = rng.choice(n, size=count, replace=False)
        signs = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
        values[positions] = signs * outlier_mag
    return array_to_tensor(name, values.astype(np.float32).reshape(shape))


@dataclass
class DeskModel:
    kind: str
    graph: ModelGraph
    tensors: TensorTable
    inputs: np.ndarray
    labels: np.ndarray
    classes: int
    dims: Tuple[int, ...] = ()

    @property
    def model(self) -> Tuple[ModelGraph, TensorTable]:
        return self.graph, self.tensors


class _Builder:
    """Collects tensors for a generated model, drawing a fresh sub-seed per tensor"""
    def __init__(self, seed: int, bulk_sigma: float, outlier_frac: float, outlier_mag: float):
        self._seed = seed
        self._count = 0
        self._bulk_sigma = bulk_sigma
        self._outlier_frac = outlier_frac
        self._outlier_mag = outlier_mag
        self.tensors: TensorTable = {}

    def _next_seed(self) -> int:
        self._count += 1
        return self._seed * 1000 + self._count

    def weight(self, name: str, shape: Tuple[int, ...], outliers: bool = True) -> str:
        self.tensors[name] = gen_outlier_tensor(
            math.prod(shape), bulk_sigma=self._bulk_sigma,
            outlier_frac=self._outlier_frac if outliers else 0.0,
            outlier_mag=self._outlier_mag, seed=self._next_seed(), shape=shape, name=name)
        return name

    def array(self, name: str, values: np.ndarray) -> str:
        self.tensors[name] = array_to_tensor(name, np.asarray(values).astype(np.float32))
        return name

    def normal(self, name: str, shape: Tuple[int, ...], sigma: float = 1.0, mean: float = 0.0) -> str:
        values = mean + sigma * rng_for(self._next_seed()).standard_normal(shape)
        return self.array(name, values)

    def linear(self, name: str, out_features: int, in_features: int, bias: bool = True,
               outliers: bool = True, **attrs) -> LayerSpec:
        return LayerSpec(
            kind=LayerKind.LINEAR, name=name,
            weight_name=self.weight(f"{name}.weight", (out_features, in_features), outliers=outliers),
            bias_name=self.weight(f"{name}.bias", (out_features,), outliers=False) if bias else None,
            attrs=dict(attrs),
        )


# The classifier head carries no outliers: injected outliers stay in the
# feature layers, and the head bias is reset by _balance_head.

def _mlp(builder: _Builder, dims: Sequence[int]) -> Tuple[ModelGraph, int]:
    if len(dims) < 2:
        raise ArgumentError(f"mlp dims need at least input and output extents, got {list(dims)}")
    layers = []
    last = len(dims) - 2
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        if i:
            layers.append(LayerSpec(kind=LayerKind.RELU, name=f"relu{i}"))
        layers.append(builder.linear(f"fc{i + 1}", fan_out, fan_in, outliers=i < last))
    return ModelGraph(layers=layers, input_shape=(dims[0],)), dims[-1]


def _attn(builder: _Builder, dims: Sequence[int]) -> Tuple[ModelGraph, int]:
    if len(dims) != 4:
        raise ArgumentError(f"attn dims are (vocab, d_model, classes, seq), got {list(dims)}")
    vocab, d_model, classes, seq = dims
    embed = LayerSpec(kind=LayerKind.EMBEDDING, name='embed',
                      weight_name=builder.normal('embed.weight', (vocab, d_model)))
    norm = LayerSpec(kind=LayerKind.LAYERNORM, name='ln',
                     weight_name=builder.normal('ln.weight', (d_model,), sigma=0.1, mean=1.0),
                     bias_name=builder.normal('ln.bias', (d_model,), sigma=0.1))
    attention = LayerSpec(
        kind=LayerKind.SOFTMAX_ATTENTION, name='attn',
        attrs={'head_dim': d_model, 'causal': 1},
        children=[builder.linear(f"attn.{p}", d_model, d_model) for p in ('q', 'k', 'v', 'o')],
    )
    layers = [embed, norm, attention, LayerSpec(kind=LayerKind.GELU, name='gelu'),
              builder.linear('head', classes, d_model, outliers=False)]
    return ModelGraph(layers=layers, input_shape=(seq,)), classes


_BUILDERS = {
    'mlp': (_mlp, MLP_DIMS),
    'attn': (_attn, ATTN_DIMS),
}


def random_inputs(graph: ModelGraph, tensors: TensorTable, n: int, seed: int = 0) -> np.ndarray:
    """Standard-normal F32 batch, or uniform token ids when the model starts with an embedding"""
    if n < 0:
        raise ArgumentError(f"Input count must be >= 0, got {n}")
    rng = rng_for(seed)
    shape = (n,) + tuple(graph.input_shape)
    first = graph.layers[0] if graph.layers else None
    if first is not None and first.kind is LayerKind.EMBEDDING:
        vocab = tensors[first.weight_name].shape[0]
        return rng.integers(0, vocab, size=shape).astype(np.float32)
    return rng.standard_normal(shape).astype(np.float32)


def _last_rows(outputs: np.ndarray) -> np.ndarray:
    return outputs.reshape(outputs.shape[0], -1, outputs.shape[-1])[:, -1, :]


def _label(engine: InferenceEngine, candidates: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted labels and top-1/top-2 logit margins of a candidate batch"""
    outputs = engine.run(candidates, batched=True)
    top2 = np.sort(_last_rows(outputs), axis=-1)[:, -2:]
    return predict(outputs), top2[:, 1] - top2[:, 0]


def _balance_head(graph: ModelGraph, tensors: TensorTable, inputs: np.ndarray, classes: int) -> np.ndarray:
    """Head bias under which every class wins about 1/classes of ``inputs``.

    Coordinate sweeps: class c wins a sample when its bias exceeds the gap to
    the best rival, so b[c] is set to the 1/classes quantile of those gaps.
    """
    head = graph.layers[-1]
    tensors[head.bias_name] = array_to_tensor(head.bias_name, np.zeros(classes, dtype=np.float32))
    logits = _last_rows(InferenceEngine(graph, tensors).run(inputs, batched=True)).astype(np.float64)
    bias = np.zeros(classes)
    for _ in range(BALANCE_ROUNDS if classes > 1 else 0):
        for c in range(classes):
            rivals = np.delete(logits + bias, c, axis=1).max(axis=1)
            bias[c] = np.quantile(rivals - logits[:, c], 1.0 / classes)
    bias -= bias.mean()
    tensors[head.bias_name] = array_to_tensor(head.bias_name, bias.astype(np.float32))
    logger.debug("Balanced head bias: %s", np.round(bias, 6).tolist())
    return bias


def gen_desk_model(kind: str = 'mlp', dims: Optional[Sequence[int]] = None, seed: int = 0,
                   samples: int = 512, pool: int = DEFAULT_POOL, bulk_sigma: float = 0.05,
                   outlier_frac: float = 0.002, outlier_mag: float = 1.0) -> DeskModel:
    """Outlier-injected FP32 model plus a class-balanced dataset it labels itself.

    The head bias is first balanced on a fixed calibration batch so that every
    class is predicted about equally often. Then ``pool * samples`` random
    candidates are labeled by the FP32 model; for each class the
    ``samples // classes`` candidates with the widest top-1/top-2 logit margin
    are kept, so chance accuracy is exactly 1/classes.
    """
    if kind not in _BUILDERS:
        raise ArgumentError(f"Unknown desk model kind '{kind}'; choose one of {sorted(_BUILDERS)}")
    build, default_dims = _BUILDERS[kind]
    dims = tuple(int(d) for d in (default_dims if dims is None else dims))
    if any(d < 1 for d in dims):
        raise ArgumentError(f"dims must be positive, got {list(dims)}")
    if samples < 0 or pool < 1:
        raise ArgumentError(f"samples must be >= 0 and pool >= 1, got {samples} / {pool}")

    builder = _Builder(seed, bulk_sigma, outlier_frac, outlier_mag)
    graph, classes = build(builder, dims)
    graph.metadata['desk.kind'] = kind
    graph.metadata['desk.seed'] = str(seed)
    calibration = random_inputs(graph, builder.tensors, BALANCE_BATCH,
                                seed=seed * CANDIDATE_SEED_STRIDE + CANDIDATE_SEED_STRIDE - 1)
    _balance_head(graph, builder.tensors, calibration, classes)
    engine = InferenceEngine(graph, builder.tensors)

    quota = samples // classes
    total = pool * quota * classes
    chunks, labels, margins = [], [], []
    for start in range(0, total, CANDIDATE_CHUNK):
        batch = random_inputs(graph, builder.tensors, min(CANDIDATE_CHUNK, total - start),
                              seed=seed * CANDIDATE_SEED_STRIDE + start // CANDIDATE_CHUNK)
        batch_labels, batch_margins = _label(engine, batch)
        chunks.append(batch)
        labels.append(batch_labels)
        margins.append(batch_margins)
    candidates = np.concatenate(chunks) if chunks else np.zeros((0,) + graph.input_shape, dtype=np.float32)
    labels = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
    margins = np.concatenate(margins) if margins else np.zeros(0, dtype=np.float32)

    picked = []
    for c in range(classes):
        members = np.flatnonzero(labels == c)
        if members.size < quota:
            raise DegenerateInputError(f"FP32 model predicts class {c} for only {members.size} of "
                                       f"{total} candidates, need {quota}; raise pool or change the seed")
        widest = members[np.argsort(-margins[members], kind='stable')[:quota]]
        picked.append(np.sort(widest))
    picked = np.concatenate(picked) if picked else np.zeros(0, dtype=np.int64)

    order = rng_for(seed).permutation(picked.size)
    chosen = picked[order]
    logger.info("Desk %s model: %d tensors, %d samples over %d classes",
                kind, len(builder.tensors), chosen.size, classes)
    return DeskModel(kind=kind, graph=graph, tensors=builder.tensors,
                     inputs=candidates[chosen].astype(np.float32),
                     labels=labels[chosen].astype(np.int64), classes=classes, dims=dims)


def gen_bench_model(params: int, seed: int = 0, width: int = 512, bulk_sigma: float = 0.05,
                    outlier_frac: float = 0.002, outlier_mag: float = 1.0) -> Tuple[ModelGraph, TensorTable]:
    """Stack of square linear layers holding roughly ``params`` parameters"""
    if params < 0:
        raise ArgumentError(f"params must be >= 0, got {params}")
    if params == 0:
        return ModelGraph(layers=[], input_shape=(1,)), {}
    width = max(2, min(width, int(math.isqrt(params))))
    depth = max(1, round(params / (width * width + width)))
    builder = _Builder(seed, bulk_sigma, outlier_frac, outlier_mag)
    layers = []
    for i in range(depth):
        if i:
            layers.append(LayerSpec(kind=LayerKind.RELU, name=f"relu{i}"))
        layers.append(builder.linear(f"layer{i}", width, width))
    return ModelGraph(layers=layers, input_shape=(width,)), builder.tensors
