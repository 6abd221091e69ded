from .synthetic import (
    DeskModel,
    gen_outlier_tensor,
    gen_desk_model,
    gen_bench_model,
    random_inputs
)
from .experiment import AccuracyRow, AccuracyTable, accuracy, run_table1_analog
from .bench import BenchReport, bench, count_params

__all__ = [
    'DeskModel',
    'gen_outlier_tensor',
    'gen_desk_model',
    'gen_bench_model',
    'random_inputs',
    'AccuracyRow',
    'AccuracyTable',
    'accuracy',
    'run_table1_analog',
    'BenchReport',
    'bench',
    'count_params'
]
