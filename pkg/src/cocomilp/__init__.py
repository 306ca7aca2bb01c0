"""Contrastive, competition-aware predict-and-search for binary MILPs."""

__version__ = "0.1.0"
