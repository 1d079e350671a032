"""Per-frame segmentation of motion capture with a dilated temporal fully-convolutional network."""

__version__ = "0.1.0"
