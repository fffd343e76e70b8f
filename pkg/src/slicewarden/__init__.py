"""Slice-mobility attack emulation and positive-unlabeled detection toolkit."""

__version__ = "0.1.0"
