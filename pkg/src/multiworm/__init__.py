"""Worldline worm and multiworm quantum Monte Carlo for stacked-layer Bose-Hubbard models."""

__version__ = "0.1.0"
