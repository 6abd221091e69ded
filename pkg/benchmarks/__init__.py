from .performance import SplitQuantBenchmark, benchmark_cli

__all__ = ['SplitQuantBenchmark', 'benchmark_cli']
