"""Interactive multi-task network for end-to-end aspect-based sentiment analysis."""

__version__ = "0.1.0"
