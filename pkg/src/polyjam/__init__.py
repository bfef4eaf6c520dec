"""Two-stage chord-conditioned polyphonic music generation with LSTMs."""

__version__ = "0.1.0"
