"""Planning and tracking of aerial motions for a single-rigid-body quadruped."""

__version__ = "0.1.0"
