"""Intra-frame error concealment with motion vectors hidden by 3D reversible data hiding."""

__version__ = "0.1.0"
