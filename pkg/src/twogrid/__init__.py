"""Two-grid Hilbert tokenization and frequency-curriculum masked autoencoders."""

__version__ = "0.1.0"
