"""Multi-camera vehicle tracking on edge nodes with real-time admission control."""

__version__ = "0.1.0"
