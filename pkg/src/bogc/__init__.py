"""Uncertainty-calibrated gradient aggregation for multi-modal learning."""

__version__ = "0.1.0"
