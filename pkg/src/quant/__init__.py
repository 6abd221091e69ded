from .clustering import ClusterAssignment, kmeans3, kmeans3_oracle
from .quantizer import (
    QuantizedTensor,
    TensorErrorReport,
    SizeReport,
    compute_range,
    quant_params,
    quantize_tensor,
    dequantize_tensor,
    quantize_model,
    error_stats,
    model_error_stats,
    model_size_report,
    reconstruction_mse
)
from .splitter import (
    SplitPlan,
    SplitResult,
    SplitModelResult,
    SplitCheckReport,
    split_layer,
    split_model,
    unsplit_check
)

__all__ = [
    'ClusterAssignment', 'kmeans3', 'kmeans3_oracle',
    'QuantizedTensor', 'TensorErrorReport', 'SizeReport',
    'compute_range', 'quant_params', 'quantize_tensor', 'dequantize_tensor',
    'quantize_model', 'error_stats', 'model_error_stats', 'model_size_report',
    'reconstruction_mse',
    'SplitPlan', 'SplitResult', 'SplitModelResult', 'SplitCheckReport',
    'split_layer', 'split_model', 'unsplit_check'
]
