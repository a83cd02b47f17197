"""Variational thermal states of spin chains as stochastic quantum matrix-product states."""

__version__ = "0.1.0"
