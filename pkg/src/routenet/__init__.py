"""Desk-scale RouteNet toolkit: simulate, learn, baseline and optimize network KPIs."""

__version__ = "0.1.0"
