"""Backpressure-assisted inter-domain traffic engineering.

A central coordinator derives temporary priority routing rules from per-AS
congestion backlogs (plain or forecast-aware backpressure, stitched loop-free
onto the distance-vector underlay) and a deterministic discrete-event
simulator measures the throughput, overflow and latency effects against plain
distance-vector routing.
"""

__version__ = "0.1.0"
