"""GNSS replay/jamming simulation and receiver-side attack detection."""

__version__ = "0.1.0"
