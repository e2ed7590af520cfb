"""Stochastic Cahn-Hilliard and Mullins-Sekerka simulation toolkit."""

__version__ = "0.1.0"
