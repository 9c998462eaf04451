"""Bayesian physics-informed networks for transformer oil temperature and
insulation ageing."""

__version__ = "0.1.0"
