"""Hierarchical gene -> protein -> histology fusion for discrete-time survival."""

__version__ = "0.1.0"
