"""Unsupervised MT at desk scale: count-based agents and back-translation distillation recipes."""

__version__ = "0.1.0"
