"""Transformer top-oil temperature forecasting toolkit.

IEC 60076-7 thermal simulation, three neural forecasters (MLP, TCN, TiDE)
on a minimal reverse-mode autodiff substrate, quantile prediction intervals,
autoregressive evaluation, and a synthetic-data oracle.
"""

__version__ = "0.1.0"
