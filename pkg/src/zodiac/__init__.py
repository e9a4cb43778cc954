"""Distributed stochastic zeroth-order primal-dual coordinate optimization."""

__version__ = "0.1.0"
