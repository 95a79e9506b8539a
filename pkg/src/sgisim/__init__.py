"""Monte Carlo simulation of dual-sensing Stern-Gerlach interferometer experiments."""

__version__ = "0.1.0"
