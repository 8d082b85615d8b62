"""Transcript preprocessing: segmentation, tokenization, dependency tags."""

__version__ = "0.1.0"
