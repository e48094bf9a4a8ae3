"""Object-aware multimodal 3D mapping on synthetic dynamic scenes."""
__version__ = "0.1.0"
