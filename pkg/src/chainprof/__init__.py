"""Offline resource-limit profiling of network functions and service chains."""
__version__ = "0.1.0"
