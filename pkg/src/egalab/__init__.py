"""Character-level transformer lab: energy-gated attention and ablations."""

__version__ = "0.1.0"
