"""Simulator for self-certifying photonic probabilistic bits and the networks built from them."""

__version__ = "0.1.0"
