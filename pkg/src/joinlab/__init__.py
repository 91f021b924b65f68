"""Numerics for self-joinings of free-group representations into rank-one factors."""

__version__ = "0.1.0"
