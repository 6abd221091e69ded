"""Accuracy recovery experiment: quantize-only vs split-then-quantize per bit-width."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from engine.engine import forward_batch, predict
from quant.quantizer import check_bits, model_size_report, quantize_model
from quant.splitter import DEFAULT_MIN_ELEMS, split_model
from .synthetic import DeskModel

logger = logging.getLogger(__name__)

DEFAULT_BITS = (8, 4, 2)


@dataclass
class AccuracyRow:
    bits: int
    baseline: float
    split: float
    baseline_size_ratio: float
    split_size_ratio: float

    @property
    def recovered(self) -> float:
        return self.split - self.baseline


@dataclass
class AccuracyTable:
    kind: str
    samples: int
    classes: int
    fp_accuracy: float
    layers_split: int
    rows: List[AccuracyRow] = field(default_factory=list)

    @property
    def chance(self) -> float:
        return 1.0 / self.classes if self.classes else 0.0

    def row(self, bits: int) -> AccuracyRow:
        for row in self.rows:
            if row.bits == bits:
                return row
        raise KeyError(bits)

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind,
            'samples': self.samples,
            'classes': self.classes,
            'chance': self.chance,
            'fp_accuracy': self.fp_accuracy,
            'layers_split': self.layers_split,
            'rows': [dict(asdict(row), recovered=row.recovered) for row in self.rows],
        }


def accuracy(graph, tensors, inputs: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict(forward_batch(graph, tensors, inputs)) == labels))


def run_table1_analog(desk: DeskModel, bits: Sequence[int] = DEFAULT_BITS,
                      min_elems: int = DEFAULT_MIN_ELEMS, threads: int = 1) -> AccuracyTable:
    """FP, quantized and split+quantized accuracy of a desk model on its own labels"""
    bits = [check_bits(b) for b in bits]
    split = split_model(desk.graph, desk.tensors, min_elems=min_elems, threads=threads)
    table = AccuracyTable(
        kind=desk.kind,
        samples=len(desk.labels),
        classes=desk.classes,
        fp_accuracy=accuracy(desk.graph, desk.tensors, desk.inputs, desk.labels),
        layers_split=len(split.plans),
    )

    def evaluate(b: int) -> AccuracyRow:
        base_graph, base_tensors = quantize_model(desk.graph, desk.tensors, b)
        split_graph, split_tensors = quantize_model(split.graph, split.tensors, b)
        row = AccuracyRow(
            bits=b,
            baseline=accuracy(base_graph, base_tensors, desk.inputs, desk.labels),
            split=accuracy(split_graph, split_tensors, desk.inputs, desk.labels),
            baseline_size_ratio=model_size_report(base_tensors, desk.tensors).ratio,
            split_size_ratio=model_size_report(split_tensors, desk.tensors).ratio,
        )
        logger.info("INT%d: baseline %.4f, split %.4f", b, row.baseline, row.split)
        return row

    # rows are independent; map keeps the requested order
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        table.rows = list(pool.map(evaluate, bits))
    return table
