"""Neural check-worthiness sentence ranking with weak supervision."""

__version__ = "0.1.0"
