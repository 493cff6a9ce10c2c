"""Self-supervised pose bootstrapping for single-image 3D face reconstruction."""

__version__ = "0.1.0"
