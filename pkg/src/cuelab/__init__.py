"""Closed-loop attention cueing: signal paths, cue logic, study protocol, simulator."""
from . import kernels

__version__ = "0.1.0"
__all__ = ["kernels", "__version__"]
