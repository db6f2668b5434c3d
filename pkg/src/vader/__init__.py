"""Fair three-party content exchange over state channels, with a simulated ledger."""

__version__ = "0.1.0"
