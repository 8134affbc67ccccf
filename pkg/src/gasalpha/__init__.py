"""Genetic-programming alpha factors, sentiment ratios and tree ensembles for single-asset daily direction forecasting."""

__version__ = "0.1.0"
