"""Intensity estimation for Poisson processes with covariates by pairwise robust tests."""

__version__ = "0.1.0"
