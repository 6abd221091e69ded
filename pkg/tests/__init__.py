import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
for _path in (os.path.join(_ROOT, 'src'), _ROOT):
    if _path not in sys.path:
        sys.path.insert(0, _path)

from .test_core import TestDataTypes, TestGraph, TestQuantParams, TestConfig, TestExceptions
from .test_storage import TestPacking, TestContainer, TestValidation
from .test_clustering import TestKMeans, TestOracle
from .test_quantizer import (
    TestQuantParams as TestQuantizerParams,
    TestComputeRange,
    TestQuantizeProperties,
    TestErrorStats,
    TestQuantizeModel
)
from .test_splitter import TestSplitLayer, TestSplitModel, TestUnsplitCheck
from .test_engine import TestKernels, TestInferenceEngine, TestAgreement
from .test_harness import TestOutlierTensor, TestDeskModel, TestAccuracyExperiment, TestBench
from .test_cli import TestCommandLine

__all__ = [
    'TestDataTypes',
    'TestGraph',
    'TestQuantParams',
    'TestConfig',
    'TestExceptions',
    'TestPacking',
    'TestContainer',
    'TestValidation',
    'TestKMeans',
    'TestOracle',
    'TestQuantizerParams',
    'TestComputeRange',
    'TestQuantizeProperties',
    'TestErrorStats',
    'TestQuantizeModel',
    'TestSplitLayer',
    'TestSplitModel',
    'TestUnsplitCheck',
    'TestKernels',
    'TestInferenceEngine',
    'TestAgreement',
    'TestOutlierTensor',
    'TestDeskModel',
    'TestAccuracyExperiment',
    'TestBench',
    'TestCommandLine'
]
