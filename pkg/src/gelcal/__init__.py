"""Generalized-empirical-likelihood calibration for missing-response data."""

__version__ = "0.1.0"
