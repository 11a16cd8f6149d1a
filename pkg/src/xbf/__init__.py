"""Exact multicast source routing with partitioned in-packet Bloom filters."""

__version__ = "0.1.0"
