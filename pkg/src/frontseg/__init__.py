"""Toolkit for binary segmentation of thin front lines under extreme class
imbalance: synthetic scene generation, patch pipeline, a small encoder-decoder
trained with distance-map weighted losses, MCC-based early stopping, and
tolerance-aware evaluation."""

__version__ = "0.1.0"
