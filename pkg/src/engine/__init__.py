from .engine import (
    Activation,
    AgreementReport,
    InferenceEngine,
    forward,
    forward_batch,
    predict,
    batch_agreement
)

__all__ = [
    'Activation',
    'AgreementReport',
    'InferenceEngine',
    'forward',
    'forward_batch',
    'predict',
    'batch_agreement'
]
