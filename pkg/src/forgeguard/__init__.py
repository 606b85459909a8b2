"""forgeguard: detect whether a face image is real, deepfaked, or surgically altered."""

__version__ = "0.1.0"
