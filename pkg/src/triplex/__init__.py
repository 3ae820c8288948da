"""Remote heart monitoring pipeline: one analysis core, three architectures."""

__version__ = "0.1.0"
