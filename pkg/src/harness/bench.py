import logging
from dataclasses import dataclass
from typing import Dict

from core.data_types import DType
from core.graph import ModelGraph
from core.tensor import Tensor
from quant.quantizer import check_bits, quantize_model
from quant.splitter import DEFAULT_MIN_ELEMS, split_model
from utils.monitoring import Monitoring

logger = logging.getLogger(__name__)


@dataclass
class BenchReport:
    params: int
    bits: int
    layers_split: int
    split_seconds: float
    quantize_seconds: float
    peak_rss_mb: float

    @property
    def total_seconds(self) -> float:
        return self.split_seconds + self.quantize_seconds

    def to_dict(self) -> Dict:
        return {
            'params': self.params,
            'bits': self.bits,
            'layers_split': self.layers_split,
            'split_seconds': self.split_seconds,
            'quantize_seconds': self.quantize_seconds,
            'total_seconds': self.total_seconds,
            'peak_rss_mb': self.peak_rss_mb,
        }


def count_params(graph: ModelGraph, tensors: Dict[str, Tensor]) -> int:
    return sum(tensors[name].numel for name in graph.tensor_names()
               if tensors[name].dtype is DType.F32)


def bench(graph: ModelGraph, tensors: Dict[str, Tensor], bits: int = 4,
          threads: int = 1, min_elems: int = DEFAULT_MIN_ELEMS) -> BenchReport:
    """Wall-clock split and quantize timings; every call recomputes from scratch"""
    check_bits(bits)
    monitor = Monitoring()
    with monitor.phase('split'):
        split = split_model(graph, tensors, min_elems=min_elems, threads=threads)
    with monitor.phase('quantize'):
        quantize_model(split.graph, split.tensors, bits, threads=threads)
    stats = monitor.get_stats()

    report = BenchReport(
        params=count_params(graph, tensors),
        bits=bits,
        layers_split=len(split.plans),
        split_seconds=stats.phases['split'].seconds,
        quantize_seconds=stats.phases['quantize'].seconds,
        peak_rss_mb=stats.peak_rss_mb,
    )
    logger.info("Bench: %d params, split %.3fs, quantize %.3fs",
                report.params, report.split_seconds, report.quantize_seconds)
    return report
