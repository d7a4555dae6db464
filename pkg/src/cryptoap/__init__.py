"""Cross-sectional crypto asset pricing toolkit."""

__version__ = "0.1.0"
