"""Group secret-key generation over state-dependent broadcast channels."""

__version__ = "0.1.0"
