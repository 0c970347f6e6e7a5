"""Fault-tolerant edge/cloud stream pipeline on a deterministic simulator."""

__version__ = "0.1.0"
