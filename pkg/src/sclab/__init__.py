"""Scene-aware instance completion toolkit."""

__version__ = "0.1.0"
