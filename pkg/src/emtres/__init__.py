"""emtres: desk-scale EMT simulation and AC/DC resonance screening."""

__version__ = "0.1.0"
