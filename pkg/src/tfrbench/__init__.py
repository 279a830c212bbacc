"""Time-frequency feature extraction and CNN benchmark toolkit."""

__version__ = "0.1.0"
