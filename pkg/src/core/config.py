import os
from typing import Any, Dict, Optional

from .exceptions import ArgumentError

DEFAULT_CONFIG: Dict[str, Any] = {
    'threads': 1,
    'min_elems': 16,        # layers with fewer weight+bias elements are never split
    'max_iter': 100,
    'tol': 1e-6,            # relative inertia improvement that stops Lloyd
    'verify_tol': 1e-4,
    'log_level': 'WARNING',
    'bulk_sigma': 0.05,
    'outlier_frac': 0.002,
    'outlier_mag': 1.0,
    'seed': 0,
}

ENV_THREADS = 'SPLITQUANT_THREADS'
ENV_LOG_LEVEL = 'SPLITQUANT_LOG_LEVEL'


def load_config(overrides: Optional[Dict[str, Any]] = None,
                environ: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    """Defaults, then environment, then explicit overrides (None values ignored)"""
    env = os.environ if environ is None else environ
    config = dict(DEFAULT_CONFIG)

    if env.get(ENV_THREADS):
        try:
            config['threads'] = int(env[ENV_THREADS])
        except ValueError:
            raise ArgumentError(f"{ENV_THREADS} must be an integer, got {env[ENV_THREADS]!r}")
    if env.get(ENV_LOG_LEVEL):
        config['log_level'] = env[ENV_LOG_LEVEL].upper()

    if overrides:
        unknown = set(overrides) - set(DEFAULT_CONFIG)
        if unknown:
            raise ArgumentError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")
        config.update({k: v for k, v in overrides.items() if v is not None})

    if int(config['threads']) < 1:
        raise ArgumentError(f"threads must be >= 1, got {config['threads']}")
    return config
