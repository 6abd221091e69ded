import time
import statistics
import argparse
from typing import List, Dict, Callable

from harness.bench import bench
from harness.synthetic import gen_bench_model, gen_desk_model, gen_outlier_tensor
from quant.clustering import kmeans3
from quant.quantizer import quantize_tensor
from storage.packing import tensor_to_array


class SplitQuantBenchmark:
    """Throughput benchmarks for clustering, quantization and the full pipeline"""
    def __init__(self, seed: int = 0, threads: int = 1):
        self.seed = seed
        self.threads = threads
        self.results: Dict[str, Dict[str, float]] = {}

    def run_tests(self, tests: List[str], iterations: int = 5,
                  params: int = 10_000_000, bits: int = 4) -> Dict[str, Dict[str, float]]:
        """Run specified benchmarks"""
        benchmark_methods = {
            'kmeans': self._benchmark_kmeans,
            'quantize': self._benchmark_quantize,
            'pipeline': self._benchmark_pipeline,
            'desk': self._benchmark_desk,
        }

        for test in tests:
            if test in benchmark_methods:
                print(f"Running {test} benchmark...")
                self.results[test] = benchmark_methods[test](iterations, params, bits)

        return self.results

    def _measure(self, func: Callable, *args) -> float:
        """Execution time of one call in milliseconds"""
        start = time.perf_counter()
        func(*args)
        return (time.perf_counter() - start) * 1000

    def _benchmark_kmeans(self, iterations: int, params: int, _) -> Dict[str, float]:
        """k-means over one large outlier tensor"""
        n = min(params, 4_000_000)
        values = tensor_to_array(gen_outlier_tensor(n, seed=self.seed))
        latencies = [self._measure(kmeans3, values) for _ in range(iterations)]
        return {
            'values_per_sec': n / (statistics.mean(latencies) / 1000),
            'avg_latency': statistics.mean(latencies),
        }

    def _benchmark_quantize(self, iterations: int, params: int, bits: int) -> Dict[str, float]:
        """Per-tensor quantization of one large tensor"""
        n = min(params, 4_000_000)
        tensor = gen_outlier_tensor(n, seed=self.seed)
        latencies = [self._measure(quantize_tensor, tensor, bits) for _ in range(iterations)]
        return {
            'values_per_sec': n / (statistics.mean(latencies) / 1000),
            'avg_latency': statistics.mean(latencies),
            'throughput_mb': (n * 4) / (statistics.mean(latencies) / 1000) / (1024 * 1024),
        }

    def _benchmark_pipeline(self, iterations: int, params: int, bits: int) -> Dict[str, float]:
        """Split then quantize a synthetic model"""
        graph, tensors = gen_bench_model(params, seed=self.seed)
        reports = [bench(graph, tensors, bits=bits, threads=self.threads) for _ in range(iterations)]
        totals = [r.total_seconds for r in reports]
        return {
            'params': reports[0].params,
            'split_seconds': statistics.mean(r.split_seconds for r in reports),
            'quantize_seconds': statistics.mean(r.quantize_seconds for r in reports),
            'total_seconds': statistics.mean(totals),
            'peak_rss_mb': max(r.peak_rss_mb for r in reports),
        }

    def _benchmark_desk(self, iterations: int, _, bits: int) -> Dict[str, float]:
        """Pipeline on the desk MLP and attention models"""
        results = {}
        for kind in ('mlp', 'attn'):
            desk = gen_desk_model(kind, seed=self.seed, samples=64)
            latencies = [1000 * bench(desk.graph, desk.tensors, bits=bits).total_seconds
                         for _ in range(iterations)]
            results[f"{kind}_latency"] = statistics.mean(latencies)
        return results

    def print_results(self):
        """Print formatted benchmark results"""
        print("\nBenchmark Results:")
        print("=" * 60)
        for test, metrics in self.results.items():
            print(f"\n{test.upper()} Benchmark:")
            for metric, value in metrics.items():
                if 'latency' in metric:
                    print(f"{metric.replace('_', ' ').title()}: {value:.2f} ms")
                elif 'mb' in metric:
                    print(f"{metric.replace('_', ' ').title()}: {value:.2f} MB/s")
                elif 'seconds' in metric:
                    print(f"{metric.replace('_', ' ').title()}: {value:.3f} s")
                else:
                    print(f"{metric.replace('_', ' ').title()}: {value:,.2f}")


def benchmark_cli():
    """Command line interface for benchmarks"""
    parser = argparse.ArgumentParser(description='Split + quantize throughput benchmark')
    parser.add_argument('--iterations', type=int, default=3, help='Repetitions per test')
    parser.add_argument('--params', type=int, default=10_000_000, help='Synthetic model size')
    parser.add_argument('--bits', type=int, default=4, choices=[2, 4, 8])
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--threads', type=int, default=1)
    parser.add_argument('--tests', nargs='+', default=['kmeans', 'quantize', 'pipeline'],
                        help='Tests to run (kmeans, quantize, pipeline, desk)')

    args = parser.parse_args()

    benchmark = SplitQuantBenchmark(args.seed, args.threads)
    benchmark.run_tests(args.tests, args.iterations, args.params, args.bits)
    benchmark.print_results()

if __name__ == '__main__':
    benchmark_cli()
