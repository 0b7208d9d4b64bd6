"""Multi-target multi-camera vehicle tracking."""

__version__ = "1.0.0"
