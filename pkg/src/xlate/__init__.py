"""Bayesian matching of variable clusters between two unpaired multi-way time-series datasets."""

__version__ = "0.1.0"
