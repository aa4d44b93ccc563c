"""protoforge: neural surrogates, constrained design search, and calibrated intervals."""

__version__ = "0.1.0"
