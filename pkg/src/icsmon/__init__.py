"""Routing and traffic-mirroring planner for SDN-based industrial control networks."""

__version__ = "0.1.0"
