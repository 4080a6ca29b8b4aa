"""Near-field multiuser communications over sparse linear arrays."""

__version__ = "0.1.0"
