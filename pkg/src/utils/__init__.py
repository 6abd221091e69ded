from .logging import configure_logging
from .monitoring import Monitoring, PhaseStats, RunStats

__all__ = [
    'configure_logging',
    'Monitoring',
    'PhaseStats',
    'RunStats'
]
