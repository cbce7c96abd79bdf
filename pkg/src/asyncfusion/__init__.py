"""Affinity-driven opportunistic fusion of asynchronous multi-modal sensor streams."""

__version__ = "0.1.0"
