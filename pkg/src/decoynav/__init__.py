"""Deceptive path planning with ambiguity-maximising reinforcement learning agents."""

__version__ = "0.1.0"
