"""Multi-label tweet emotion classifier: self-attention encoder with one
CNN head per emotion, trained with hand-written backpropagation."""

__version__ = "0.1.0"
