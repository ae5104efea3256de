"""Dyadic counterexample laboratory: smooth weights, small steps and remodeling."""

__version__ = "0.1.0"
