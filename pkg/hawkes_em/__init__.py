"""Multivariate Hawkes processes: simulation, penalized MLE and variational EM."""

__version__ = "0.1.0"
