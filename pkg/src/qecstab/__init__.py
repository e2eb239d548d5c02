"""Stability and memory experiment circuits, simulation, matching decoding and analysis."""

__version__ = '0.1.0'
