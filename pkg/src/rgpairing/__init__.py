"""Bethe-root continuation solver and determinant correlators for the
reduced BCS pairing model, with brute-force verification oracles."""

from .model import PairingModel, RootSet, SpectrumResult, merge_degenerate, validate

__version__ = "0.1.0"

__all__ = [
    "PairingModel",
    "RootSet",
    "SpectrumResult",
    "merge_degenerate",
    "validate",
    "__version__",
]
