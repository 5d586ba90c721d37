"""Byte-level text classifier with frequency-domain features and a gated linear-recurrence sequencer."""

__version__ = "0.1.0"
