"""
GWCL
Pixel-level graph-weighted contrastive learning for semi-supervised
hyperspectral image classification.
"""

__version__ = "1.0.0"
