"""Two-stage personalized/generalized BPSD prediction from wearable signals."""

__version__ = "0.1.0"
