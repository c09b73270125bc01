"""Multi-scale maximum entropy IRL over temporal market states."""

__version__ = "0.1.0"
