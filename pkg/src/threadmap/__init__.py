"""Thread-to-core mapping policies and a multiprogramming simulator."""

__version__ = "0.1.0"
