"""Wasserstein-distance valuation and procurement of differentially private data."""

__version__ = "0.1.0"
