"""Location-aware guard sets for anonymity networks, with the bandwidth-quanta
baseline, relay-level adversaries and a day-stepped simulator."""

__version__ = "0.1.0"
