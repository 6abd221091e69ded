import logging
import sys
from typing import Optional, TextIO

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def configure_logging(level: str = 'WARNING', stream: Optional[TextIO] = None) -> logging.Handler:
    """Install one stderr handler on the root logger, replacing any earlier one from here"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, '_splitquant', False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._splitquant = True
    root.addHandler(handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.WARNING))
    return handler
