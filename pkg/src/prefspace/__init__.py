"""prefspace: behavior feature spaces from exploratory actions."""

__version__ = "0.1.0"
