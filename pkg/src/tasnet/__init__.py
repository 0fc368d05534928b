"""Time-domain audio separation with a learned nonnegative encoder/decoder."""

__version__ = "0.1.0"
