"""Markov limit order book simulation and its fluid limit."""

__version__ = "0.1.0"
