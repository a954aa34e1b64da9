"""Smile dynamics of forward-variance models: analytic first-order smile,
skew versus skewness, implied leverage and skew-stickiness ratio, with
empirical estimators and a Monte Carlo oracle."""

__version__ = "0.1.0"
