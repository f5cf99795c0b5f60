"""Exemplar-based summary transfer with determinantal point processes."""
__version__ = "0.1.0"
