"""Stress-testing and benchmarking toolkit for service-based 5G cores."""

__version__ = "0.1.0"
