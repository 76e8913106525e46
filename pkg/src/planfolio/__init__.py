"""Runtime prediction and portfolio selection for sampling-based planners."""

__version__ = "0.1.0"
