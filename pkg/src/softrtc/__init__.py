"""Token-weighted action-prior denoising for chunked flow-matching policies under inference delay."""

__version__ = "0.1.0"
