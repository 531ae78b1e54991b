"""Differential evolution with diversity mechanisms on dynamic constrained G24 problems."""

__version__ = "0.1.0"
