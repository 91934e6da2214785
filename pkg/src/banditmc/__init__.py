"""Bandit allocation among unbiased Monte Carlo estimators."""

__version__ = "0.1.0"
