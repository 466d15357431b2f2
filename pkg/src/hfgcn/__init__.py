"""Hypergraph fusion graph convolutional network for skeleton action recognition."""

__version__ = "0.1.0"
