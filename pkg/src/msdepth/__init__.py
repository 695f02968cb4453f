"""Multi-spectral monocular depth estimation with contrastive alignment and attachable fusion."""

__version__ = "0.1.0"
