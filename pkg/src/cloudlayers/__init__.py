"""Detection of one vs. two cloud motion layers in thermal image sequences."""

__version__ = "0.1.0"
