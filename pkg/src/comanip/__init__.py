"""Decentralized adaptive collaborative manipulation on SE(3)."""

__version__ = "0.1.0"
